//! `mev-stubsim` — drop-in stand-in for a Verilog compiler/simulator
//! pair, for tests and demos on machines without one.
//!
//! `compile` performs the structural checks a real compiler would reject
//! on (unbalanced module/endmodule, parentheses, begin/end) and bundles
//! the sources into the output artifact. `run` "simulates" by comparing
//! the normalized device-under-test text against the reference hash the
//! testbench declares in a `// STUB_REF_HASH: <hex>` comment; a match
//! prints the pass marker. A testbench containing `STUB_LOOP` spins
//! forever, standing in for a runaway simulation.
//!
//! This is deliberately not a simulator: it can only certify code that is
//! textually equivalent to the reference solution. Point the simulator
//! config at a real toolchain for true functional verification.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mev_core::dataset::normalize_code;
use mev_core::gateway::sha256_hex;
use mev_core::verify::precheck;

#[derive(Parser)]
#[command(name = "mev-stubsim", about = "Stub Verilog compile/run pair for tests and demos", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structurally check sources and bundle them into an artifact
    Compile {
        #[arg(short, long)]
        out: PathBuf,
        files: Vec<PathBuf>,
    },
    /// "Simulate" a compiled artifact
    Run { artifact: PathBuf },
    /// Print the reference hash for the given sources (for authoring
    /// STUB_REF_HASH lines in testbenches)
    Hash { files: Vec<PathBuf> },
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    sources: Vec<Source>,
}

#[derive(Serialize, Deserialize)]
struct Source {
    name: String,
    text: String,
}

fn dut_hash(texts: &[&str]) -> String {
    let normalized: Vec<String> = texts.iter().map(|t| normalize_code(t)).collect();
    sha256_hex(&normalized.join("\n"))
}

fn is_bench(text: &str) -> bool {
    text.contains("STUB_REF_HASH") || text.contains("STUB_LOOP")
}

fn compile(out: &PathBuf, files: &[PathBuf]) -> Result<(), String> {
    if files.is_empty() {
        return Err("no input files".to_string());
    }
    let mut sources = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(file)
            .map_err(|e| format!("{}: {e}", file.display()))?;
        precheck(&text).map_err(|reason| format!("{}: {reason}", file.display()))?;
        sources.push(Source {
            name: file
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("source")
                .to_string(),
            text,
        });
    }
    let artifact = Artifact { sources };
    std::fs::write(out, serde_json::to_string(&artifact).expect("artifact serializes"))
        .map_err(|e| format!("{}: {e}", out.display()))?;
    Ok(())
}

fn run(artifact_path: &PathBuf) -> Result<(), String> {
    let text = std::fs::read_to_string(artifact_path)
        .map_err(|e| format!("{}: {e}", artifact_path.display()))?;
    let artifact: Artifact =
        serde_json::from_str(&text).map_err(|e| format!("bad artifact: {e}"))?;

    let (benches, duts): (Vec<_>, Vec<_>) =
        artifact.sources.iter().partition(|s| is_bench(&s.text));

    if benches.iter().any(|b| b.text.contains("STUB_LOOP")) {
        // runaway simulation; the caller's timeout is the only way out
        loop {
            std::thread::sleep(std::time::Duration::from_secs(1));
        }
    }

    let expected = benches.iter().find_map(|b| {
        b.text.lines().find_map(|line| {
            line.split("STUB_REF_HASH:")
                .nth(1)
                .map(|rest| rest.trim().to_string())
        })
    });
    let Some(expected) = expected else {
        println!("STUB_NO_REFERENCE: testbench declares no STUB_REF_HASH");
        return Ok(());
    };
    let dut_texts: Vec<&str> = duts.iter().map(|s| s.text.as_str()).collect();
    let actual = dut_hash(&dut_texts);
    if actual == expected {
        println!("ALL_TESTS_PASSED");
    } else {
        println!("STUB_HASH_MISMATCH: expected {expected} got {actual}");
    }
    Ok(())
}

fn hash(files: &[PathBuf]) -> Result<(), String> {
    let mut texts = Vec::new();
    for file in files {
        texts.push(
            std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?,
        );
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    println!("{}", dut_hash(&refs));
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compile { out, files } => compile(out, files),
        Command::Run { artifact } => run(artifact),
        Command::Hash { files } => hash(files),
    };
    if let Err(e) = result {
        eprintln!("mev-stubsim: {e}");
        std::process::exit(1);
    }
}
