//! Command implementations behind the `mev` binary: dataset pipeline
//! stages, routing, evaluation runs, and reporting. Kept in a library so
//! both binaries and the test suites share one code path.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use mev_core::dataset::{self, DatasetError, LabelOptions};
use mev_core::gateway::Gateway;
use mev_core::harness::{self, EvalOptions, HarnessError};
use mev_core::metrics::{
    compare_tables, render_delta_text, render_table_csv, render_table_text, MetricsError,
};
use mev_core::model::{ComplexityCategory, ModelError, ProblemSet};
use mev_core::router::{self, ClassifierConfig, RouterError};
use mev_core::verify::{syntax_check, SimulatorConfig, VerifyError};

use config::AppConfig;

/// Errors mapped to the documented exit codes:
/// 1 config, 2 io, 3 labeling, 4 schema, 5 simulator missing.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Labeling(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    SimulatorMissing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Labeling(_) => 3,
            CliError::Schema(_) => 4,
            CliError::SimulatorMissing(_) => 5,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Schema { .. } => CliError::Schema(e.to_string()),
            DatasetError::LabelingFailed { .. } | DatasetError::Gateway(_) => {
                CliError::Labeling(e.to_string())
            }
            DatasetError::Io { .. } | DatasetError::EmptyCorpus(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io { .. } => CliError::Io(e.to_string()),
            HarnessError::Verify(VerifyError::SimulatorMissing(p)) => {
                CliError::SimulatorMissing(format!("simulator not found: {p}"))
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::SimulatorMissing(_) => CliError::SimulatorMissing(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<RouterError> for CliError {
    fn from(e: RouterError) -> Self {
        match e {
            RouterError::EmptyDescription => CliError::Config(e.to_string()),
            _ => CliError::Labeling(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn gateway_from(config: &AppConfig) -> Gateway {
    Gateway::new(config.gateway.to_gateway_config())
}

// ---- dataset subcommands ----

fn write_provenance(corpus: &dataset::Corpus, out: &Path) -> Result<(), CliError> {
    let sidecar = out.with_extension("provenance.json");
    let json = serde_json::to_string_pretty(&corpus.provenance)
        .expect("provenance serializes");
    std::fs::write(&sidecar, json)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", sidecar.display())))
}

pub fn cmd_dataset_ingest(root: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = dataset::ingest(root)?;
    dataset::export_dataset(&corpus.entries, out)?;
    write_provenance(&corpus, out)?;
    println!(
        "{} entries, {} warnings",
        corpus.len(),
        dataset::ingest_warnings(&corpus)
    );
    Ok(())
}

pub fn cmd_dataset_dedup(input: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = dataset::load_dataset(input)?;
    let before = corpus.len();
    let deduped = dataset::dedup(corpus);
    dataset::export_dataset(&deduped.entries, out)?;
    write_provenance(&deduped, out)?;
    println!("{} entries ({} duplicates removed)", deduped.len(), before - deduped.len());
    Ok(())
}

pub fn cmd_dataset_label(
    config: &AppConfig,
    input: &Path,
    out: &Path,
    endpoint: Option<&str>,
) -> Result<(), CliError> {
    let corpus = dataset::load_dataset(input)?;
    let gateway = gateway_from(config);
    let mut opts = LabelOptions::new(endpoint.unwrap_or(&config.labeler.endpoint));
    opts.max_fail_fraction = config.labeler.max_fail_fraction;
    let labeled = dataset::fine_grain_label(corpus, &gateway, &opts)?;
    dataset::export_dataset(&labeled.entries, out)?;
    write_provenance(&labeled, out)?;
    println!("{} entries labeled", labeled.len());
    Ok(())
}

pub fn cmd_dataset_categorize(
    config: &AppConfig,
    input: &Path,
    out: &Path,
    endpoint: Option<&str>,
) -> Result<(), CliError> {
    let corpus = dataset::load_dataset(input)?;
    let gateway = gateway_from(config);
    let mut opts = LabelOptions::new(endpoint.unwrap_or(&config.labeler.endpoint));
    opts.max_fail_fraction = config.labeler.max_fail_fraction;
    let categorized = dataset::coarse_grain_label(corpus, &gateway, &opts)?;
    dataset::export_dataset(&categorized.entries, out)?;
    write_provenance(&categorized, out)?;
    let mut counts: BTreeMap<ComplexityCategory, usize> = BTreeMap::new();
    for e in &categorized.entries {
        if let Some(c) = e.category {
            *counts.entry(c).or_default() += 1;
        }
    }
    let summary: Vec<String> = counts.iter().map(|(c, n)| format!("{c}: {n}")).collect();
    println!("{} entries categorized ({})", categorized.len(), summary.join(", "));
    Ok(())
}

pub fn cmd_dataset_partition(input: &Path, out_dir: &Path) -> Result<(), CliError> {
    let corpus = dataset::load_dataset(input)?;
    let parts = dataset::partition(&corpus)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    for (tier, entries) in &parts {
        let path = out_dir.join(format!("{}.jsonl", tier.name().to_ascii_lowercase()));
        dataset::export_dataset(entries, &path)?;
        println!("{tier}: {} entries -> {}", entries.len(), path.display());
    }
    Ok(())
}

pub fn cmd_dataset_corrupt(input: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let corpus = dataset::load_dataset(input)?;
    let corrupted = dataset::corrupt_shuffle(corpus, seed)?;
    dataset::export_dataset(&corrupted.entries, out)?;
    write_provenance(&corrupted, out)?;
    println!("{} entries corrupted (seed {seed})", corrupted.len());
    Ok(())
}

pub fn cmd_dataset_export(input: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = dataset::load_dataset(input)?;
    dataset::export_dataset(&corpus.entries, out)?;
    println!("{} entries", corpus.len());
    Ok(())
}

pub fn cmd_dataset_manifests(
    input: &Path,
    base_model: &str,
    out_dir: &Path,
    learning_rate: Option<f64>,
    epochs: Option<Vec<u32>>,
) -> Result<(), CliError> {
    let corpus = dataset::load_dataset(input)?;
    let parts = dataset::partition(&corpus)?;
    let overrides = match (learning_rate, epochs) {
        (Some(lr), Some(ep)) => Some((lr, ep)),
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "--learning-rate and --epochs must be given together".into(),
            ))
        }
    };
    let manifests = dataset::emit_manifests(&parts, base_model, out_dir, overrides)?;
    for m in &manifests {
        println!(
            "{}: lr {} epochs {:?} -> {}",
            m.category, m.learning_rate, m.epochs, m.dataset_path
        );
    }
    Ok(())
}

// ---- route ----

pub fn cmd_route(
    config: &AppConfig,
    description: &str,
    heuristic: bool,
    force_category: Option<ComplexityCategory>,
) -> Result<(), CliError> {
    if description.trim().is_empty() {
        return Err(CliError::Config("description is empty".into()));
    }
    let gateway = gateway_from(config);
    let classifier = resolve_classifier(config, heuristic, force_category)?;

    // with a configured registry print the full decision; otherwise just
    // the classification
    let decision_json = if config.experts.is_empty() {
        let classification = match &classifier {
            ClassifierConfig::Forced(c) => router::Classification {
                category: *c,
                kind: router::ClassifierKind::Forced,
                note: "category forced by flag".into(),
            },
            ClassifierConfig::GroundTruth => {
                return Err(CliError::Config(
                    "ground-truth routing needs a problem suite, not a bare description".into(),
                ))
            }
            ClassifierConfig::Heuristic => {
                let (category, note) = router::classify_heuristic(description)?;
                router::Classification {
                    category,
                    kind: router::ClassifierKind::Heuristic,
                    note,
                }
            }
            ClassifierConfig::Model { endpoint } => {
                router::classify_model(description, &gateway, endpoint)?
            }
        };
        serde_json::json!({
            "category": classification.category,
            "classifier_kind": classification.kind,
            "confidence_note": classification.note,
        })
    } else {
        let registry = config.registry()?;
        let problem = mev_core::model::Problem {
            id: "adhoc".to_string(),
            suite: mev_core::model::Suite::Human,
            prompt: description.to_string(),
            testbench: "-".to_string(),
            reference_solution: None,
            category: None,
        };
        let decision = router::route(&problem, &registry, &gateway, &classifier)?;
        serde_json::to_value(&decision).expect("decision serializes")
    };
    println!("{}", serde_json::to_string_pretty(&decision_json).expect("json renders"));
    Ok(())
}

fn resolve_classifier(
    config: &AppConfig,
    heuristic: bool,
    force_category: Option<ComplexityCategory>,
) -> Result<ClassifierConfig, CliError> {
    if let Some(category) = force_category {
        return Ok(ClassifierConfig::Forced(category));
    }
    if heuristic {
        return Ok(ClassifierConfig::Heuristic);
    }
    match config.classifier.kind.as_str() {
        "heuristic" => Ok(ClassifierConfig::Heuristic),
        "model" => {
            let endpoint = config.classifier.endpoint.clone().ok_or_else(|| {
                CliError::Config("classifier.kind = \"model\" requires classifier.endpoint".into())
            })?;
            Ok(ClassifierConfig::Model { endpoint })
        }
        other => Err(CliError::Config(format!("unknown classifier kind '{other}'"))),
    }
}

// ---- eval ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    Oracle,
    Broken,
    Echo,
}

impl MockMode {
    pub fn parse(s: &str) -> Result<MockMode, CliError> {
        match s {
            "oracle" => Ok(MockMode::Oracle),
            "broken" => Ok(MockMode::Broken),
            "echo" => Ok(MockMode::Echo),
            other => Err(CliError::Config(format!(
                "unknown mock mode '{other}' (expected oracle, broken, or echo)"
            ))),
        }
    }
}

/// Locates the bundled stub simulator: `MEV_STUBSIM` env var, then a
/// sibling of the current executable, then PATH.
pub fn stub_sim_path() -> String {
    if let Ok(path) = std::env::var("MEV_STUBSIM") {
        if !path.is_empty() {
            return path;
        }
    }
    if let Ok(exe) = std::env::current_exe() {
        if let Some(dir) = exe.parent() {
            let sibling = dir.join("mev-stubsim");
            if sibling.exists() {
                return sibling.display().to_string();
            }
        }
    }
    "mev-stubsim".to_string()
}

pub fn stub_sim_config() -> SimulatorConfig {
    let stub = stub_sim_path();
    SimulatorConfig {
        compile_cmd: format!("{stub} compile -o {{out}} {{files}}"),
        run_cmd: format!("{stub} run {{out}}"),
        pass_marker: "ALL_TESTS_PASSED".to_string(),
        compile_timeout_ms: 10_000,
        run_timeout_ms: 10_000,
        workdir_root: std::env::temp_dir().join("mev-verify"),
        keep_artifacts: false,
    }
}

fn resolve_simulator(config: &AppConfig, stub: bool) -> SimulatorConfig {
    if stub {
        stub_sim_config()
    } else {
        config
            .simulator
            .clone()
            .unwrap_or_default()
            .to_simulator_config()
    }
}

/// One cheap compile to prove the simulator is reachable before a run.
fn probe_simulator(sim: &SimulatorConfig) -> Result<(), CliError> {
    match syntax_check("module probe; endmodule", sim) {
        Ok(_) => Ok(()),
        Err(VerifyError::SimulatorMissing(p)) => Err(CliError::SimulatorMissing(format!(
            "simulator not found: {p} (install it, configure [simulator], or pass --stub-sim)"
        ))),
        Err(other) => Err(other.into()),
    }
}

pub struct EvalRunArgs {
    pub suite_dir: PathBuf,
    pub run_id: Option<String>,
    pub mock: Option<MockMode>,
    pub stub_sim: bool,
    pub resume: bool,
    pub seed: u64,
    pub model_label: Option<String>,
}

pub fn cmd_eval_run(config: &AppConfig, args: &EvalRunArgs) -> Result<(), CliError> {
    let suite = harness::load_suite(&args.suite_dir)?;
    let (registry, gateway, classifier, default_label) = match args.mock {
        Some(MockMode::Oracle) => {
            let (registry, oracle) = harness::oracle_setup(&suite)?;
            let gateway =
                Gateway::new(config.gateway.to_gateway_config()).with_oracle_table(oracle);
            (registry, gateway, ClassifierConfig::GroundTruth, "oracle")
        }
        Some(MockMode::Broken) => {
            let (registry, _) = harness::oracle_setup(&suite)?;
            // empty oracle table: every expert answers with a broken stub
            let gateway = Gateway::new(config.gateway.to_gateway_config());
            (registry, gateway, ClassifierConfig::GroundTruth, "broken")
        }
        Some(MockMode::Echo) => {
            let specs: Vec<_> = ComplexityCategory::ALL
                .iter()
                .map(|&c| mev_core::model::ExpertSpec {
                    expert_id: format!("echo-{}", c.name().to_ascii_lowercase()),
                    category: c,
                    endpoint: "mock://echo".to_string(),
                    model_name: "echo".to_string(),
                    sampling: Default::default(),
                })
                .collect();
            let registry = mev_core::model::validate_registry(&specs)?;
            let gateway = Gateway::new(config.gateway.to_gateway_config());
            (registry, gateway, ClassifierConfig::Heuristic, "echo")
        }
        None => {
            let registry = config.registry()?;
            let gateway = gateway_from(config);
            let classifier = resolve_classifier(config, false, None)?;
            (registry, gateway, classifier, "model")
        }
    };

    // mock runs default to the bundled stub when no simulator is configured
    let use_stub = args.stub_sim || (args.mock.is_some() && config.simulator.is_none());
    let sim = resolve_simulator(config, use_stub);
    probe_simulator(&sim)?;

    let run_id = args
        .run_id
        .clone()
        .unwrap_or_else(|| format!("run-s{}", args.seed));
    let mut opts = EvalOptions::new(config.paths.runs_root.clone(), run_id, args.seed);
    opts.params = config.eval.to_params();
    opts.problem_parallelism = config.eval.problem_parallelism;
    opts.verify_parallelism = config.eval.verify_parallelism;
    opts.model_label = args
        .model_label
        .clone()
        .unwrap_or_else(|| default_label.to_string());
    opts.resume = args.resume;

    let outcome = harness::run_eval(&suite, &registry, &gateway, &classifier, &sim, &opts)?;
    eprintln!("run artifacts: {}", outcome.run_dir.display());
    print!("{}", render_table_text(&outcome.table));
    Ok(())
}

pub fn cmd_eval_report(
    config: &AppConfig,
    run_id: &str,
    format: &str,
    compare: Option<&str>,
    literal_topk: bool,
) -> Result<(), CliError> {
    let table = if literal_topk {
        harness::report_literal_topk(&config.paths.runs_root, run_id)?
    } else {
        harness::report(&config.paths.runs_root, run_id)?.0
    };
    match compare {
        None => match format {
            "csv" => print!("{}", render_table_csv(&table)),
            "text" => print!("{}", render_table_text(&table)),
            other => return Err(CliError::Config(format!("unknown format '{other}'"))),
        },
        Some(other_run) => {
            let other_table = if literal_topk {
                harness::report_literal_topk(&config.paths.runs_root, other_run)?
            } else {
                harness::report(&config.paths.runs_root, other_run)?.0
            };
            let delta = compare_tables(&table, &other_table)?;
            print!("{}", render_table_text(&table));
            print!("{}", render_table_text(&other_table));
            print!("{}", render_delta_text(&delta));
        }
    }
    Ok(())
}

pub struct MisrouteArgs {
    pub suite_dir: PathBuf,
    pub rounds: u32,
    pub seed: u64,
    pub stub_sim: bool,
}

pub fn cmd_eval_misroute(config: &AppConfig, args: &MisrouteArgs) -> Result<(), CliError> {
    let suite = harness::load_suite(&args.suite_dir)?;
    let (_, oracle) = harness::oracle_setup(&suite)?;
    let gateway = Gateway::new(config.gateway.to_gateway_config()).with_oracle_table(oracle);
    let use_stub = args.stub_sim || config.simulator.is_none();
    let sim = resolve_simulator(config, use_stub);
    probe_simulator(&sim)?;
    let params = config.eval.to_params();
    let report = harness::misroute_experiment(
        &suite,
        &gateway,
        &sim,
        &params,
        args.seed,
        args.rounds,
        config.eval.verify_parallelism,
    )?;
    print!("{}", render_table_text(&report.ground_truth));
    print!("{}", render_table_text(&report.random));
    let mean: f64 = report.per_seed_pass1.iter().sum::<f64>() / report.per_seed_pass1.len() as f64;
    let per_seed: Vec<String> = report
        .per_seed_pass1
        .iter()
        .map(|v| format!("{v:.1}"))
        .collect();
    println!("random-routing pass@1 per seed: {}", per_seed.join(" "));
    println!(
        "random-routing pass@1 mean over {} seeds: {mean:.1}",
        report.rounds
    );
    Ok(())
}

/// Loads a suite and prints a one-line summary; used by `suite check`.
pub fn cmd_suite_check(suite_dir: &Path) -> Result<(), CliError> {
    let suite = harness::load_suite(suite_dir)?;
    let mut by_suite: BTreeMap<&str, usize> = BTreeMap::new();
    for p in suite.problems() {
        *by_suite.entry(p.suite.label()).or_default() += 1;
    }
    let summary: Vec<String> = by_suite.iter().map(|(s, n)| format!("{s}: {n}")).collect();
    println!("{} problems ({})", suite.len(), summary.join(", "));
    Ok(())
}

/// Shared by tests: loads a ProblemSet or dies with a CliError.
pub fn load_suite(path: &Path) -> Result<ProblemSet, CliError> {
    Ok(harness::load_suite(path)?)
}
