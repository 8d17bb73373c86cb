//! Verifier behavior against scripted stand-in compilers/simulators:
//! exit-code handling, pass-marker detection, timeouts, batch bounds,
//! and isolation.

use std::path::Path;
use std::time::{Duration, Instant};

use mev_core::model::{ComplexityCategory, GenerationSample, Problem, ProblemSet, Suite};
use mev_core::verify::{functional_check, syntax_check, verify_batch, SimulatorConfig};

/// Writes an executable shell script and returns its path as a string.
fn script(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
    path.display().to_string()
}

fn config(dir: &Path, compile: &str, run: &str) -> SimulatorConfig {
    SimulatorConfig {
        compile_cmd: format!("{compile} {{out}} {{files}}"),
        run_cmd: format!("{run} {{out}}"),
        pass_marker: "ALL_TESTS_PASSED".to_string(),
        compile_timeout_ms: 2_000,
        run_timeout_ms: 2_000,
        workdir_root: dir.join("work"),
        keep_artifacts: false,
    }
}

/// Compile = concatenate sources into the output artifact, failing when
/// any source contains the token BAD_SYNTAX. Run = grep the artifact:
/// DUT code matching the testbench's EXPECT line prints the marker.
fn fake_toolchain(dir: &Path) -> (String, String) {
    let compile = script(
        dir,
        "fake-compile.sh",
        r#"out="$1"; shift
for f in "$@"; do
  if grep -q "BAD_SYNTAX" "$f"; then
    echo "error: bad syntax near BAD_SYNTAX in $f" >&2
    exit 1
  fi
done
cat "$@" > "$out"
exit 0"#,
    );
    let run = script(
        dir,
        "fake-run.sh",
        r#"out="$1"
if grep -q "SIM_SLEEP" "$out"; then
  sleep 30
fi
expect=$(sed -n 's/.*EXPECT://p' "$out" | head -1)
if [ -n "$expect" ] && grep -v "EXPECT:" "$out" | grep -q "$expect"; then
  echo "ALL_TESTS_PASSED"
  exit 0
fi
echo "MISMATCH"
exit 0"#,
    );
    (compile, run)
}

fn problem(id: &str, tb: &str) -> Problem {
    Problem {
        id: id.to_string(),
        suite: Suite::Human,
        prompt: "a design".to_string(),
        testbench: tb.to_string(),
        reference_solution: None,
        category: None,
    }
}

fn sample(problem_id: &str, index: u32, code: &str) -> GenerationSample {
    GenerationSample {
        problem_id: problem_id.to_string(),
        sample_index: index,
        expert_id: "e".to_string(),
        category: ComplexityCategory::Basic,
        code: code.to_string(),
        latency_ms: 0,
    }
}

#[test]
fn syntax_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (compile, run) = fake_toolchain(dir.path());
    let config = config(dir.path(), &compile, &run);

    let ok = syntax_check("module m; endmodule", &config).unwrap();
    assert!(ok.syntax_ok());
    assert!(!ok.functional_ok());

    let bad = syntax_check("module m; BAD_SYNTAX endmodule", &config).unwrap();
    assert!(!bad.syntax_ok());
    assert!(bad.detail().contains("bad syntax"));
}

#[test]
fn compile_timeout_flags_timed_out() {
    let dir = tempfile::tempdir().unwrap();
    let slow = script(dir.path(), "slow-compile.sh", "sleep 30");
    let mut config = config(dir.path(), &slow, "true");
    config.run_cmd = "true {out}".to_string();
    config.compile_timeout_ms = 300;
    let start = Instant::now();
    let outcome = syntax_check("module m; endmodule", &config).unwrap();
    assert!(outcome.timed_out());
    assert!(!outcome.syntax_ok());
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn functional_check_marker_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (compile, run) = fake_toolchain(dir.path());
    let config = config(dir.path(), &compile, &run);

    // testbench expects the AND assign; matching DUT passes
    let tb = "module tb; // EXPECT:assign y = a & b;\nendmodule";
    let good = functional_check("module top(input a, input b, output y); assign y = a & b; endmodule", tb, &config).unwrap();
    assert!(good.syntax_ok() && good.functional_ok());

    // wrong implementation compiles but fails the expectation
    let wrong = functional_check("module top(input a, input b, output y); assign y = a | b; endmodule", tb, &config).unwrap();
    assert!(wrong.syntax_ok());
    assert!(!wrong.functional_ok());
    assert!(wrong.detail().contains("MISMATCH"));
}

#[test]
fn run_timeout_flags_timed_out_with_syntax_ok() {
    let dir = tempfile::tempdir().unwrap();
    let (compile, run) = fake_toolchain(dir.path());
    let mut config = config(dir.path(), &compile, &run);
    config.run_timeout_ms = 300;
    let tb = "module tb; // SIM_SLEEP forever loop\nendmodule";
    let start = Instant::now();
    let outcome = functional_check("module m; endmodule", tb, &config).unwrap();
    assert!(outcome.timed_out());
    assert!(outcome.syntax_ok());
    assert!(!outcome.functional_ok());
    // run_timeout plus bounded overhead
    assert!(start.elapsed() < Duration::from_millis(300) + Duration::from_secs(5));
}

#[test]
fn batch_bounds_parallelism_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let compile = script(
        dir.path(),
        "slowish-compile.sh",
        r#"out="$1"; shift; sleep 0.05; cat "$@" > "$out""#,
    );
    let run = script(dir.path(), "always-pass.sh", "echo ALL_TESTS_PASSED");
    let config = config(dir.path(), &compile, &run);

    let problems = ProblemSet::new(vec![problem("p", "module tb; endmodule")]).unwrap();
    // 30 distinct codes so memoization cannot collapse the batch
    let samples: Vec<_> = (0..30)
        .map(|i| sample("p", i, &format!("module m{i}; endmodule")))
        .collect();
    let result = verify_batch(&samples, &problems, &config, 4);
    assert_eq!(result.outcomes.len(), 30);
    assert!(result.peak_concurrency <= 4, "peak {}", result.peak_concurrency);
    assert!(result.outcomes.values().all(|o| o.functional_ok()));

    // identical rerun, different parallelism: identical outcome map
    let rerun = verify_batch(&samples, &problems, &config, 2);
    assert_eq!(result.outcomes, rerun.outcomes);
}

#[test]
fn batch_survives_per_sample_failures() {
    let dir = tempfile::tempdir().unwrap();
    let (compile, run) = fake_toolchain(dir.path());
    let config = config(dir.path(), &compile, &run);
    let problems = ProblemSet::new(vec![problem("p", "module tb; // EXPECT:assign ok\nendmodule")]).unwrap();
    let samples = vec![
        sample("p", 0, "module m; assign ok endmodule"),
        sample("p", 1, "no module keyword at all"),
        sample("p", 2, "module m; BAD_SYNTAX endmodule"),
        sample("unknown-problem", 3, "module m; endmodule"),
    ];
    let result = verify_batch(&samples, &problems, &config, 2);
    assert_eq!(result.outcomes.len(), 4);
    assert!(result.outcomes[&("p".to_string(), 0)].functional_ok());
    let precheck_fail = &result.outcomes[&("p".to_string(), 1)];
    assert!(!precheck_fail.syntax_ok());
    assert!(precheck_fail.detail().contains("precheck"));
    assert!(!result.outcomes[&("p".to_string(), 2)].syntax_ok());
    assert!(!result.outcomes[&("unknown-problem".to_string(), 3)].syntax_ok());
}

#[test]
fn batch_memoizes_identical_code() {
    let dir = tempfile::tempdir().unwrap();
    let count_file = dir.path().join("count");
    std::fs::write(&count_file, "").unwrap();
    // compile appends a line per invocation so we can count runs
    let compile = script(
        dir.path(),
        "counting-compile.sh",
        &format!(
            r#"out="$1"; shift; echo x >> {}; cat "$@" > "$out""#,
            count_file.display()
        ),
    );
    let run = script(dir.path(), "always-pass.sh", "echo ALL_TESTS_PASSED");
    let config = config(dir.path(), &compile, &run);
    let problems = ProblemSet::new(vec![problem("p", "module tb; endmodule")]).unwrap();
    let samples: Vec<_> = (0..15)
        .map(|i| sample("p", i, "module same; endmodule"))
        .collect();
    let result = verify_batch(&samples, &problems, &config, 4);
    assert_eq!(result.outcomes.len(), 15);
    let invocations = std::fs::read_to_string(&count_file).unwrap().lines().count();
    assert_eq!(invocations, 1, "identical code should be verified once");
}

#[test]
fn workdirs_are_isolated_and_cleaned() {
    let dir = tempfile::tempdir().unwrap();
    let (compile, run) = fake_toolchain(dir.path());
    let config = config(dir.path(), &compile, &run);
    let tb = "module tb; // EXPECT:assign ok\nendmodule";
    let _ = functional_check("module m; assign ok endmodule", tb, &config).unwrap();
    let _ = functional_check("module m; assign ok endmodule", tb, &config).unwrap();
    // cleanup removed the per-check directories
    let leftovers = std::fs::read_dir(dir.path().join("work"))
        .map(|entries| entries.count())
        .unwrap_or(0);
    assert_eq!(leftovers, 0);

    // keep_artifacts preserves them
    let mut keep = config.clone();
    keep.keep_artifacts = true;
    let _ = functional_check("module m; assign ok endmodule", tb, &keep).unwrap();
    let kept = std::fs::read_dir(dir.path().join("work")).unwrap().count();
    assert_eq!(kept, 1);
}
