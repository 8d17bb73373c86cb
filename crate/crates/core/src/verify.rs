//! Syntax and functional verification of generated Verilog through an
//! external compiler/simulator, with isolated work directories, timeouts,
//! and a bounded-parallelism batch driver.
//!
//! The simulator is configured as two command templates (compile, then
//! run), so anything with an Icarus-style command line works, including
//! the bundled stub used in tests and demos.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GenerationSample, ProblemSet, VerifyOutcome};
use crate::util::run_indexed;

const DIAGNOSTIC_LIMIT: usize = 8 * 1024;

/// Simulator invocation: command templates with `{out}` (compiled
/// artifact) and `{files}` (source files) placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub compile_cmd: String,
    pub run_cmd: String,
    pub pass_marker: String,
    pub compile_timeout_ms: u64,
    pub run_timeout_ms: u64,
    pub workdir_root: PathBuf,
    #[serde(default)]
    pub keep_artifacts: bool,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            compile_cmd: "iverilog -o {out} {files}".to_string(),
            run_cmd: "vvp {out}".to_string(),
            pass_marker: "ALL_TESTS_PASSED".to_string(),
            compile_timeout_ms: 30_000,
            run_timeout_ms: 60_000,
            workdir_root: std::env::temp_dir().join("mev-verify"),
            keep_artifacts: false,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if !self.compile_cmd.contains("{out}") || !self.compile_cmd.contains("{files}") {
            return Err(VerifyError::BadTemplate(
                "compile_cmd must contain {out} and {files}".into(),
            ));
        }
        if !self.run_cmd.contains("{out}") {
            return Err(VerifyError::BadTemplate("run_cmd must contain {out}".into()));
        }
        if self.compile_timeout_ms == 0 || self.run_timeout_ms == 0 {
            return Err(VerifyError::BadTemplate("timeouts must be positive".into()));
        }
        Ok(())
    }

    pub fn compile_timeout(&self) -> Duration {
        Duration::from_millis(self.compile_timeout_ms)
    }

    pub fn run_timeout(&self) -> Duration {
        Duration::from_millis(self.run_timeout_ms)
    }
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

/// Positions of `word` in `text` at identifier boundaries.
fn word_positions(text: &str, word: &str) -> Vec<usize> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find(word) {
        let start = from + pos;
        let end = start + word.len();
        let left_ok = start == 0 || !is_ident_char(bytes[start - 1]);
        let right_ok = end >= bytes.len() || !is_ident_char(bytes[end]);
        if left_ok && right_ok {
            out.push(start);
        }
        from = start + 1;
    }
    out
}

fn count_word(text: &str, word: &str) -> usize {
    word_positions(text, word).len()
}

/// Fast structural filter before the simulator. Failing means the code
/// cannot compile; passing does NOT imply it will.
pub fn precheck(code: &str) -> Result<(), String> {
    if code.trim().is_empty() {
        return Err("empty source".into());
    }
    let modules = count_word(code, "module");
    let endmodules = count_word(code, "endmodule");
    if modules == 0 {
        return Err("no module keyword".into());
    }
    if modules != endmodules {
        return Err(format!(
            "unbalanced module/endmodule: {modules} vs {endmodules}"
        ));
    }
    let open = code.matches('(').count();
    let close = code.matches(')').count();
    if open != close {
        return Err(format!("unbalanced parentheses: {open} vs {close}"));
    }
    let begins = count_word(code, "begin");
    let ends = count_word(code, "end");
    if begins != ends {
        return Err(format!("unbalanced begin/end: {begins} vs {ends}"));
    }
    Ok(())
}

/// Extracts the span from the first `module` keyword to the last
/// `endmodule`, dropping completion-model chatter around the code.
/// Returns the input unchanged when no such span exists (precheck will
/// reject it downstream).
pub fn extract_module_region(text: &str) -> String {
    let starts = word_positions(text, "module");
    let ends = word_positions(text, "endmodule");
    match (starts.first(), ends.last()) {
        (Some(&start), Some(&end)) if end + "endmodule".len() > start => {
            text[start..end + "endmodule".len()].to_string()
        }
        _ => text.to_string(),
    }
}

struct CommandOutcome {
    exit_ok: bool,
    timed_out: bool,
    diagnostic: String,
    stdout: String,
}

/// Expands a command template into argv. `{files}` becomes one argument
/// per file; `{out}` is substituted textually inside its token.
fn expand_template(template: &str, out: &Path, files: &[PathBuf]) -> Vec<String> {
    let mut argv = Vec::new();
    for token in template.split_whitespace() {
        if token == "{files}" {
            argv.extend(files.iter().map(|f| f.display().to_string()));
        } else {
            argv.push(token.replace("{out}", &out.display().to_string()));
        }
    }
    argv
}

fn run_with_timeout(
    argv: &[String],
    cwd: &Path,
    timeout: Duration,
) -> Result<CommandOutcome, VerifyError> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| VerifyError::BadTemplate("empty command".into()))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // own process group, so a timeout kill reaches the simulator's
    // children too (otherwise they hold the output pipes open)
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => VerifyError::SimulatorMissing(program.clone()),
        _ => VerifyError::WorkdirFailure {
            path: cwd.to_path_buf(),
            detail: e.to_string(),
        },
    })?;

    // drain pipes on threads so a chatty process cannot deadlock on a
    // full pipe while we poll for exit
    let mut stdout_pipe = child.stdout.take().expect("stdout piped");
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let stdout_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout_pipe.read_to_end(&mut buf);
        buf
    });
    let stderr_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr_pipe.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {
                if Instant::now() >= deadline {
                    kill_process_group(&mut child);
                    let _ = child.wait();
                    timed_out = true;
                    break None;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                let _ = child.kill();
                return Err(VerifyError::WorkdirFailure {
                    path: cwd.to_path_buf(),
                    detail: e.to_string(),
                });
            }
        }
    };

    let stdout = String::from_utf8_lossy(&stdout_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&stderr_reader.join().unwrap_or_default()).into_owned();
    let mut diagnostic = String::new();
    if !stdout.is_empty() {
        diagnostic.push_str(&stdout);
    }
    if !stderr.is_empty() {
        if !diagnostic.is_empty() {
            diagnostic.push('\n');
        }
        diagnostic.push_str(&stderr);
    }
    if diagnostic.len() > DIAGNOSTIC_LIMIT {
        diagnostic.truncate(DIAGNOSTIC_LIMIT);
        diagnostic.push_str("\n[truncated]");
    }
    Ok(CommandOutcome {
        exit_ok: status.map(|s| s.success()).unwrap_or(false),
        timed_out,
        diagnostic,
        stdout,
    })
}

fn kill_process_group(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        let pgid = child.id() as i32;
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

static WORKDIR_NONCE: AtomicU64 = AtomicU64::new(0);

fn make_workdir(config: &SimulatorConfig, label: &str) -> Result<PathBuf, VerifyError> {
    let nonce = WORKDIR_NONCE.fetch_add(1, Ordering::Relaxed);
    let sanitized: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let dir = config
        .workdir_root
        .join(format!("{sanitized}-{}-{nonce}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| VerifyError::WorkdirFailure {
        path: dir.clone(),
        detail: e.to_string(),
    })?;
    Ok(dir)
}

fn write_source(dir: &Path, name: &str, content: &str) -> Result<PathBuf, VerifyError> {
    let path = dir.join(name);
    // newline-terminate so concatenating compilers never merge the last
    // line of one source with the first line of the next
    let mut bytes = content.as_bytes().to_vec();
    if !bytes.ends_with(b"\n") {
        bytes.push(b'\n');
    }
    std::fs::write(&path, bytes).map_err(|e| VerifyError::WorkdirFailure {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    Ok(path)
}

fn cleanup(dir: &Path, config: &SimulatorConfig) {
    if !config.keep_artifacts {
        let _ = std::fs::remove_dir_all(dir);
    }
}

/// Compile-only check. `functional_ok` is always false here.
pub fn syntax_check(code: &str, config: &SimulatorConfig) -> Result<VerifyOutcome, VerifyError> {
    config.validate()?;
    let dir = make_workdir(config, "syntax")?;
    let result = (|| {
        let dut = write_source(&dir, "dut.v", code)?;
        let out = dir.join("sim.out");
        let argv = expand_template(&config.compile_cmd, &out, &[dut]);
        let compile = run_with_timeout(&argv, &dir, config.compile_timeout())?;
        Ok(if compile.timed_out {
            VerifyOutcome::timeout(false, format!("compile timed out\n{}", compile.diagnostic))
        } else if compile.exit_ok {
            VerifyOutcome::functional_failure(compile.diagnostic)
        } else {
            VerifyOutcome::syntax_failure(compile.diagnostic)
        })
    })();
    cleanup(&dir, config);
    result
}

/// Full check: compile code and testbench together, then simulate and
/// look for the pass marker.
pub fn functional_check(
    code: &str,
    testbench: &str,
    config: &SimulatorConfig,
) -> Result<VerifyOutcome, VerifyError> {
    functional_check_labeled(code, testbench, config, "check")
}

fn functional_check_labeled(
    code: &str,
    testbench: &str,
    config: &SimulatorConfig,
    label: &str,
) -> Result<VerifyOutcome, VerifyError> {
    config.validate()?;
    if testbench.trim().is_empty() {
        return Err(VerifyError::BadTemplate("testbench must not be empty".into()));
    }
    let dir = make_workdir(config, label)?;
    let result = (|| {
        let dut = write_source(&dir, "dut.v", code)?;
        let tb = write_source(&dir, "tb.v", testbench)?;
        let out = dir.join("sim.out");
        let compile_argv = expand_template(&config.compile_cmd, &out, &[dut, tb]);
        let compile = run_with_timeout(&compile_argv, &dir, config.compile_timeout())?;
        if compile.timed_out {
            return Ok(VerifyOutcome::timeout(
                false,
                format!("compile timed out\n{}", compile.diagnostic),
            ));
        }
        if !compile.exit_ok {
            return Ok(VerifyOutcome::syntax_failure(compile.diagnostic));
        }
        let run_argv = expand_template(&config.run_cmd, &out, &[]);
        let run = run_with_timeout(&run_argv, &dir, config.run_timeout())?;
        if run.timed_out {
            return Ok(VerifyOutcome::timeout(
                true,
                format!("simulation timed out\n{}", run.diagnostic),
            ));
        }
        Ok(if run.exit_ok && run.stdout.contains(&config.pass_marker) {
            VerifyOutcome::passed(run.diagnostic)
        } else {
            VerifyOutcome::functional_failure(run.diagnostic)
        })
    })();
    cleanup(&dir, config);
    result
}

/// Key identifying one sample's outcome in a batch result.
pub type SampleKey = (String, u32);

#[derive(Debug)]
pub struct BatchResult {
    pub outcomes: BTreeMap<SampleKey, VerifyOutcome>,
    /// High-water mark of concurrent simulator invocations, observable
    /// so the parallelism bound can be asserted.
    pub peak_concurrency: usize,
}

/// Verifies a batch of samples with at most `parallelism` concurrent
/// simulations. Per-sample failures become failed outcomes; the batch
/// never aborts. Identical (problem, extracted code) pairs are verified
/// once and share the outcome, which is sound for a deterministic
/// simulator.
pub fn verify_batch(
    samples: &[GenerationSample],
    problems: &ProblemSet,
    config: &SimulatorConfig,
    parallelism: usize,
) -> BatchResult {
    // verify one representative per (problem, code) group
    let mut group_of: Vec<usize> = Vec::with_capacity(samples.len());
    let mut groups: Vec<(usize, String)> = Vec::new(); // (sample idx, extracted code)
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (i, sample) in samples.iter().enumerate() {
        let code = extract_module_region(&sample.code);
        let key = (sample.problem_id.clone(), crate::dataset::content_hash(&code));
        let g = *index.entry(key).or_insert_with(|| {
            groups.push((i, code.clone()));
            groups.len() - 1
        });
        group_of.push(g);
    }

    let running = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    let group_outcomes: Vec<VerifyOutcome> = run_indexed(groups.len(), parallelism.max(1), |g| {
        let (sample_idx, code) = &groups[g];
        let sample = &samples[*sample_idx];
        let problem = match problems.get(&sample.problem_id) {
            Some(p) => p,
            None => {
                return VerifyOutcome::syntax_failure(format!(
                    "unknown problem '{}'",
                    sample.problem_id
                ))
            }
        };
        if let Err(reason) = precheck(code) {
            return VerifyOutcome::syntax_failure(format!("precheck: {reason}"));
        }
        let now = running.fetch_add(1, Ordering::SeqCst) + 1;
        peak.fetch_max(now, Ordering::SeqCst);
        let label = format!("{}-s{}", sample.problem_id, sample.sample_index);
        let outcome = functional_check_labeled(code, &problem.testbench, config, &label);
        running.fetch_sub(1, Ordering::SeqCst);
        match outcome {
            Ok(v) => v,
            Err(e) => VerifyOutcome::syntax_failure(format!("verifier error: {e}")),
        }
    });

    let mut outcomes = BTreeMap::new();
    for (i, sample) in samples.iter().enumerate() {
        outcomes.insert(
            (sample.problem_id.clone(), sample.sample_index),
            group_outcomes[group_of[i]].clone(),
        );
    }
    BatchResult {
        outcomes,
        peak_concurrency: peak.load(Ordering::SeqCst),
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("simulator not found: '{0}' (install it or configure a stub)")]
    SimulatorMissing(String),
    #[error("work directory failure at {path}: {detail}")]
    WorkdirFailure { path: PathBuf, detail: String },
    #[error("bad simulator configuration: {0}")]
    BadTemplate(String),
}
