//! `mev` — single entry point for the dataset pipeline, complexity
//! routing, evaluation runs, and reporting.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use mev_cli::config::AppConfig;
use mev_cli::{
    cmd_dataset_categorize, cmd_dataset_corrupt, cmd_dataset_dedup, cmd_dataset_export,
    cmd_dataset_ingest, cmd_dataset_label, cmd_dataset_manifests, cmd_dataset_partition,
    cmd_eval_misroute, cmd_eval_report, cmd_eval_run, cmd_route, cmd_suite_check, CliError,
    EvalRunArgs, MisrouteArgs, MockMode,
};
use mev_core::model::ComplexityCategory;

#[derive(Parser)]
#[command(
    name = "mev",
    about = "Complexity-routed multi-expert Verilog generation: dataset pipeline, routing, evaluation",
    version
)]
struct Cli {
    /// Configuration file (TOML or JSON); defaults to ./mev.toml when present
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; all per-stage randomness derives from it
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset construction pipeline stages
    Dataset {
        #[command(subcommand)]
        stage: DatasetStage,
    },
    /// Classify a design description and select its expert
    Route(RouteArgs),
    /// Evaluation runs and reports
    Eval {
        #[command(subcommand)]
        action: EvalAction,
    },
    /// Validate a problem-suite directory
    Suite {
        #[command(subcommand)]
        action: SuiteAction,
    },
}

#[derive(Subcommand)]
enum DatasetStage {
    /// Collect .v/.sv files under a directory into a JSONL corpus
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop entries with duplicate normalized-content hashes
    Dedup {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-grained labeling: attach a description to every entry
    Label {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Labeling backend endpoint (overrides config)
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Coarse-grained labeling: assign a complexity category
    Categorize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Split a categorized corpus into per-tier JSONL files
    Partition {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Derange descriptions across entries (dataset-quality experiment)
    Corrupt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Shuffle seed (overrides the global --seed)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate and canonically re-export a JSONL corpus
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit per-category fine-tuning manifests and dataset slices
    Manifests {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        base_model: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Explicit learning rate (with --epochs) for unknown model families
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Comma-separated epoch list, e.g. 1,5,10
        #[arg(long, value_delimiter = ',')]
        epochs: Option<Vec<u32>>,
    },
}

#[derive(Args)]
struct RouteArgs {
    /// Design description (omit when using --file)
    description: Option<String>,
    /// Read the description from a file
    #[arg(long)]
    file: Option<PathBuf>,
    /// Force the keyword classifier even when a model is configured
    #[arg(long)]
    heuristic: bool,
    /// Bypass classification entirely
    #[arg(long)]
    force_category: Option<String>,
}

#[derive(Subcommand)]
enum EvalAction {
    /// Route, generate, verify, and report over a problem suite
    Run {
        #[arg(long)]
        suite: PathBuf,
        /// Run identifier (default: derived from the seed)
        #[arg(long)]
        run_id: Option<String>,
        /// Replace configured backends with mocks: oracle, broken, or echo
        #[arg(long)]
        mock: Option<String>,
        /// Use the bundled stub simulator instead of the configured one
        #[arg(long)]
        stub_sim: bool,
        /// Continue an interrupted run with the same run id
        #[arg(long)]
        resume: bool,
        /// Label for the result table
        #[arg(long)]
        model_label: Option<String>,
    },
    /// Render a persisted run as a table
    Report {
        #[arg(long)]
        run: String,
        /// text or csv
        #[arg(long, default_value = "text")]
        format: String,
        /// Second run id: print both tables and their delta
        #[arg(long)]
        compare: Option<String>,
        /// Literal first-k scoring instead of the unbiased estimator
        #[arg(long)]
        literal_topk: bool,
    },
    /// Ground-truth vs random routing against oracle experts
    Misroute {
        #[arg(long)]
        suite: PathBuf,
        /// Number of random-routing seeds
        #[arg(long, default_value_t = 20)]
        rounds: u32,
        #[arg(long)]
        stub_sim: bool,
    },
}

#[derive(Subcommand)]
enum SuiteAction {
    /// Load and validate a suite directory
    Check {
        #[arg(long)]
        suite: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = AppConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Dataset { stage } => match stage {
            DatasetStage::Ingest { root, out } => cmd_dataset_ingest(&root, &out),
            DatasetStage::Dedup { input, out } => cmd_dataset_dedup(&input, &out),
            DatasetStage::Label { input, out, endpoint } => {
                cmd_dataset_label(&config, &input, &out, endpoint.as_deref())
            }
            DatasetStage::Categorize { input, out, endpoint } => {
                cmd_dataset_categorize(&config, &input, &out, endpoint.as_deref())
            }
            DatasetStage::Partition { input, out_dir } => cmd_dataset_partition(&input, &out_dir),
            DatasetStage::Corrupt { input, out, seed } => {
                cmd_dataset_corrupt(&input, seed.unwrap_or(cli.seed), &out)
            }
            DatasetStage::Export { input, out } => cmd_dataset_export(&input, &out),
            DatasetStage::Manifests {
                input,
                base_model,
                out_dir,
                learning_rate,
                epochs,
            } => cmd_dataset_manifests(&input, &base_model, &out_dir, learning_rate, epochs),
        },
        Command::Route(args) => {
            let description = match (&args.description, &args.file) {
                (Some(d), None) => d.clone(),
                (None, Some(path)) => std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?,
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(
                        "give a description or --file, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(CliError::Config("description is empty".into()));
                }
            };
            let force = match &args.force_category {
                Some(name) => Some(ComplexityCategory::parse_name(name).ok_or_else(|| {
                    CliError::Config(format!("unknown category '{name}'"))
                })?),
                None => None,
            };
            cmd_route(&config, &description, args.heuristic, force)
        }
        Command::Eval { action } => match action {
            EvalAction::Run {
                suite,
                run_id,
                mock,
                stub_sim,
                resume,
                model_label,
            } => {
                let mock = mock.as_deref().map(MockMode::parse).transpose()?;
                cmd_eval_run(
                    &config,
                    &EvalRunArgs {
                        suite_dir: suite,
                        run_id,
                        mock,
                        stub_sim,
                        resume,
                        seed: cli.seed,
                        model_label,
                    },
                )
            }
            EvalAction::Report {
                run,
                format,
                compare,
                literal_topk,
            } => cmd_eval_report(&config, &run, &format, compare.as_deref(), literal_topk),
            EvalAction::Misroute { suite, rounds, stub_sim } => cmd_eval_misroute(
                &config,
                &MisrouteArgs {
                    suite_dir: suite,
                    rounds,
                    seed: cli.seed,
                    stub_sim,
                },
            ),
        },
        Command::Suite { action } => match action {
            SuiteAction::Check { suite } => cmd_suite_check(&suite),
        },
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
