//! End-to-end evaluation: load a problem suite, route and generate n
//! samples per problem, verify them, persist everything, and report
//! pass@k tables. Runs checkpoint after each problem and can resume.
//!
//! Run directory layout:
//!
//! ```text
//! <runs_root>/<run_id>/
//!   params.json             run parameters and registry digest
//!   audit.jsonl             routing decisions
//!   samples/<problem>/<i>.v generated code, one file per sample
//!   problems/<problem>.json per-problem checkpoint
//!   outcomes.jsonl          final flattened outcomes
//!   records.jsonl           final per-problem (n, c) records
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::Digest;
use thiserror::Error;

use crate::gateway::{Gateway, OracleEntry, OracleTable};
use crate::metrics::{build_table, pass_at_k, MetricsError, PassKParams, Score};
use crate::model::{
    ComplexityCategory, EvalRecord, ExpertRegistry, ExpertSpec, ModelError, PassKTable, Problem,
    ProblemSet, SamplingParams, Suite, VerifyOutcome,
};
use crate::router::{
    append_audit, generate, route, ClassifierConfig, RouterError, RoutingDecision,
};
use crate::util::run_indexed;
use crate::verify::{verify_batch, SimulatorConfig, VerifyError};

/// Loads a problem suite from `<root>/<id>/{prompt.txt, tb.v, ref.v?, meta.json}`.
pub fn load_suite(root: &Path) -> Result<ProblemSet, HarnessError> {
    if !root.is_dir() {
        return Err(HarnessError::Io {
            path: root.to_path_buf(),
            detail: "suite root is not a directory".into(),
        });
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| HarnessError::Io {
            path: root.to_path_buf(),
            detail: e.to_string(),
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(HarnessError::Io {
            path: root.to_path_buf(),
            detail: "suite has no problem directories".into(),
        });
    }

    #[derive(Deserialize)]
    struct Meta {
        id: String,
        suite: String,
        #[serde(default)]
        category: Option<String>,
    }

    let mut problems = Vec::new();
    for dir in dirs {
        let dir_name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("?")
            .to_string();
        let meta_path = dir.join("meta.json");
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|_| {
            HarnessError::BadMeta {
                id: dir_name.clone(),
                detail: "missing meta.json".into(),
            }
        })?;
        let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| HarnessError::BadMeta {
            id: dir_name.clone(),
            detail: e.to_string(),
        })?;
        let suite = Suite::parse_label(&meta.suite).ok_or_else(|| HarnessError::BadMeta {
            id: meta.id.clone(),
            detail: format!("unknown suite '{}'", meta.suite),
        })?;
        let category = match &meta.category {
            Some(name) => Some(ComplexityCategory::parse_name(name).ok_or_else(|| {
                HarnessError::BadMeta {
                    id: meta.id.clone(),
                    detail: format!("unknown category '{name}'"),
                }
            })?),
            None => None,
        };
        let prompt = std::fs::read_to_string(dir.join("prompt.txt")).map_err(|_| {
            HarnessError::MissingPrompt(meta.id.clone())
        })?;
        let testbench = std::fs::read_to_string(dir.join("tb.v"))
            .map_err(|_| HarnessError::MissingTestbench(meta.id.clone()))?;
        let reference_solution = std::fs::read_to_string(dir.join("ref.v")).ok();
        problems.push(Problem {
            id: meta.id,
            suite,
            prompt: prompt.trim_end().to_string(),
            testbench,
            reference_solution,
            category,
        });
    }
    ProblemSet::new(problems).map_err(|e| match e {
        ModelError::DuplicateProblemId(id) => HarnessError::DuplicateId(id),
        other => HarnessError::Model(other),
    })
}

/// Options for one evaluation run.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub params: PassKParams,
    pub seed: u64,
    pub model_label: String,
    pub runs_root: PathBuf,
    pub run_id: String,
    /// Problems evaluated concurrently.
    pub problem_parallelism: usize,
    /// Concurrent simulations within one problem's batch.
    pub verify_parallelism: usize,
    /// Resume from an existing run directory instead of requiring a
    /// fresh one.
    pub resume: bool,
}

impl EvalOptions {
    pub fn new(runs_root: impl Into<PathBuf>, run_id: impl Into<String>, seed: u64) -> Self {
        EvalOptions {
            params: PassKParams::default(),
            seed,
            model_label: "model".to_string(),
            runs_root: runs_root.into(),
            run_id: run_id.into(),
            problem_parallelism: 2,
            verify_parallelism: 4,
            resume: false,
        }
    }
}

/// Everything a finished (or resumed-to-finish) run hands back.
#[derive(Debug)]
pub struct EvalOutcome {
    pub run_dir: PathBuf,
    pub records: Vec<EvalRecord>,
    pub table: PassKTable,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct RunParams {
    run_id: String,
    seed: u64,
    params: PassKParams,
    model_label: String,
    registry_digest: String,
    classifier: String,
    simulator: SimulatorConfig,
}

/// Per-problem checkpoint written after the problem completes.
#[derive(Debug, Serialize, Deserialize, Clone)]
struct ProblemCheckpoint {
    problem_id: String,
    suite: Suite,
    decision: RoutingDecision,
    prompt_sha256: String,
    n: u32,
    c: u32,
    outcomes: Vec<PersistedOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

/// One line of outcomes.jsonl.
#[derive(Debug, Serialize, Deserialize, Clone)]
pub struct PersistedOutcome {
    pub problem_id: String,
    pub sample_index: u32,
    #[serde(flatten)]
    pub outcome: VerifyOutcome,
}

/// One line of records.jsonl.
#[derive(Debug, Serialize, Deserialize, Clone)]
pub struct PersistedRecord {
    pub problem_id: String,
    pub suite: Suite,
    pub n: u32,
    pub c: u32,
}

fn classifier_description(c: &ClassifierConfig) -> String {
    match c {
        ClassifierConfig::Heuristic => "heuristic".to_string(),
        ClassifierConfig::Model { endpoint } => format!("model:{endpoint}"),
        ClassifierConfig::Forced(cat) => format!("forced:{cat}"),
        ClassifierConfig::GroundTruth => "ground-truth".to_string(),
    }
}

/// Stable per-problem seed derived from the master seed, so results do
/// not depend on scheduling or completion order.
pub fn problem_seed(master: u64, problem_id: &str) -> u64 {
    let mut hasher = sha2::Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(problem_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let io_err = |e: std::io::Error| HarnessError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Ground-truth forced routing for problems that declare a category.
/// Used by the oracle end-to-end path and the misroute experiment.
pub fn ground_truth_category(problem: &Problem) -> Result<ComplexityCategory, HarnessError> {
    problem
        .category
        .ok_or_else(|| HarnessError::MissingGroundTruth(problem.id.clone()))
}

/// Runs the full evaluation: route, generate, verify, checkpoint, and
/// aggregate. With `opts.resume`, problems that already have checkpoints
/// are skipped and the final records are identical to an uninterrupted
/// run, provided backends are deterministic.
#[allow(clippy::too_many_arguments)]
pub fn run_eval(
    suite: &ProblemSet,
    registry: &ExpertRegistry,
    gateway: &Gateway,
    classifier: &ClassifierConfig,
    sim_config: &SimulatorConfig,
    opts: &EvalOptions,
) -> Result<EvalOutcome, HarnessError> {
    opts.params.validate()?;
    sim_config.validate()?;
    if suite.is_empty() {
        return Err(HarnessError::EmptySuite);
    }

    let run_dir = opts.runs_root.join(&opts.run_id);
    let problems_dir = run_dir.join("problems");
    let samples_dir = run_dir.join("samples");
    for dir in [&run_dir, &problems_dir, &samples_dir] {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
            path: dir.clone(),
            detail: e.to_string(),
        })?;
    }

    let run_params = RunParams {
        run_id: opts.run_id.clone(),
        seed: opts.seed,
        params: opts.params.clone(),
        model_label: opts.model_label.clone(),
        registry_digest: registry.digest(),
        classifier: classifier_description(classifier),
        simulator: sim_config.clone(),
    };
    let params_path = run_dir.join("params.json");
    if params_path.exists() {
        if !opts.resume {
            return Err(HarnessError::RunExists(opts.run_id.clone()));
        }
        let existing: RunParams = serde_json::from_str(
            &std::fs::read_to_string(&params_path).map_err(|e| HarnessError::Io {
                path: params_path.clone(),
                detail: e.to_string(),
            })?,
        )
        .map_err(|e| HarnessError::Io {
            path: params_path.clone(),
            detail: format!("unreadable params.json: {e}"),
        })?;
        if existing != run_params {
            return Err(HarnessError::ResumeMismatch(opts.run_id.clone()));
        }
    } else {
        write_atomic(
            &params_path,
            &serde_json::to_string_pretty(&run_params).expect("params serialize"),
        )?;
    }

    // resume: collect finished problems
    let mut completed: BTreeMap<String, ProblemCheckpoint> = BTreeMap::new();
    if let Ok(entries) = std::fs::read_dir(&problems_dir) {
        for entry in entries.filter_map(|e| e.ok()) {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            if let Ok(text) = std::fs::read_to_string(&path) {
                if let Ok(cp) = serde_json::from_str::<ProblemCheckpoint>(&text) {
                    completed.insert(cp.problem_id.clone(), cp);
                }
            }
        }
    }

    let pending: Vec<&Problem> = suite
        .problems()
        .iter()
        .filter(|p| !completed.contains_key(&p.id))
        .collect();

    let audit_path = run_dir.join("audit.jsonl");
    let audit_lock = Mutex::new(());

    let n = opts.params.n;
    let results: Vec<Result<ProblemCheckpoint, HarnessError>> =
        run_indexed(pending.len(), opts.problem_parallelism.max(1), |i| {
            let problem = pending[i];
            let decision = route(problem, registry, gateway, classifier)?;
            {
                let _guard = audit_lock.lock().expect("audit lock");
                append_audit(&audit_path, &decision).map_err(|e| HarnessError::Io {
                    path: audit_path.clone(),
                    detail: e.to_string(),
                })?;
            }
            let seed = problem_seed(opts.seed, &problem.id);
            let prompt_sha256 =
                crate::gateway::sha256_hex(&crate::router::generation_prompt(problem));

            let (c, outcomes, failure) =
                match generate(problem, &decision, registry, gateway, n, seed) {
                    Ok(samples) => {
                        let sample_dir = samples_dir.join(sanitize(&problem.id));
                        std::fs::create_dir_all(&sample_dir).map_err(|e| HarnessError::Io {
                            path: sample_dir.clone(),
                            detail: e.to_string(),
                        })?;
                        for s in &samples {
                            let path = sample_dir.join(format!("{}.v", s.sample_index));
                            std::fs::write(&path, &s.code).map_err(|e| HarnessError::Io {
                                path,
                                detail: e.to_string(),
                            })?;
                        }
                        let single = ProblemSet::new(vec![problem.clone()])?;
                        let batch =
                            verify_batch(&samples, &single, sim_config, opts.verify_parallelism);
                        let mut persisted = Vec::with_capacity(samples.len());
                        let mut c = 0u32;
                        for s in &samples {
                            let outcome = batch
                                .outcomes
                                .get(&(s.problem_id.clone(), s.sample_index))
                                .cloned()
                                .unwrap_or_else(|| {
                                    VerifyOutcome::syntax_failure("missing outcome")
                                });
                            if outcome.functional_ok() {
                                c += 1;
                            }
                            persisted.push(PersistedOutcome {
                                problem_id: s.problem_id.clone(),
                                sample_index: s.sample_index,
                                outcome,
                            });
                        }
                        (c, persisted, None)
                    }
                    Err(e) => (0, Vec::new(), Some(e.to_string())),
                };

            let checkpoint = ProblemCheckpoint {
                problem_id: problem.id.clone(),
                suite: problem.suite,
                decision,
                prompt_sha256,
                n,
                c,
                outcomes,
                failure,
            };
            let path = problems_dir.join(format!("{}.json", sanitize(&problem.id)));
            write_atomic(
                &path,
                &serde_json::to_string_pretty(&checkpoint).expect("checkpoint serialize"),
            )?;
            Ok(checkpoint)
        });

    for result in results {
        let cp = result?;
        completed.insert(cp.problem_id.clone(), cp);
    }

    // compact final artifacts in suite order
    let mut records = Vec::with_capacity(suite.len());
    let mut record_lines = String::new();
    let mut outcome_lines = String::new();
    let mut per_suite: BTreeMap<Suite, Vec<EvalRecord>> = BTreeMap::new();
    for problem in suite.problems() {
        let cp = completed
            .get(&problem.id)
            .expect("every suite problem has a checkpoint");
        let record = EvalRecord::new(cp.problem_id.clone(), cp.n, cp.c)?;
        record_lines.push_str(
            &serde_json::to_string(&PersistedRecord {
                problem_id: cp.problem_id.clone(),
                suite: cp.suite,
                n: cp.n,
                c: cp.c,
            })
            .expect("record serialize"),
        );
        record_lines.push('\n');
        for line in &cp.outcomes {
            outcome_lines.push_str(&serde_json::to_string(line).expect("outcome serialize"));
            outcome_lines.push('\n');
        }
        per_suite.entry(cp.suite).or_default().push(record.clone());
        records.push(record);
    }
    write_atomic(&run_dir.join("records.jsonl"), &record_lines)?;
    write_atomic(&run_dir.join("outcomes.jsonl"), &outcome_lines)?;

    let table = build_table(&opts.model_label, &per_suite, &opts.params, true)?;
    Ok(EvalOutcome {
        run_dir,
        records,
        table,
    })
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Loads a persisted run and rebuilds its table.
pub fn report(runs_root: &Path, run_id: &str) -> Result<(PassKTable, Vec<PersistedRecord>), HarnessError> {
    let run_dir = runs_root.join(run_id);
    let params_path = run_dir.join("params.json");
    let records_path = run_dir.join("records.jsonl");
    if !params_path.exists() || !records_path.exists() {
        return Err(HarnessError::UnknownRun(run_id.to_string()));
    }
    let params: RunParams = serde_json::from_str(
        &std::fs::read_to_string(&params_path).map_err(|e| HarnessError::Io {
            path: params_path.clone(),
            detail: e.to_string(),
        })?,
    )
    .map_err(|e| HarnessError::Io {
        path: params_path,
        detail: e.to_string(),
    })?;
    let text = std::fs::read_to_string(&records_path).map_err(|e| HarnessError::Io {
        path: records_path.clone(),
        detail: e.to_string(),
    })?;
    let mut persisted = Vec::new();
    let mut per_suite: BTreeMap<Suite, Vec<EvalRecord>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PersistedRecord =
            serde_json::from_str(line).map_err(|e| HarnessError::Io {
                path: records_path.clone(),
                detail: format!("line {}: {e}", i + 1),
            })?;
        per_suite
            .entry(rec.suite)
            .or_default()
            .push(EvalRecord::new(rec.problem_id.clone(), rec.n, rec.c)?);
        persisted.push(rec);
    }
    let table = build_table(&params.model_label, &per_suite, &params.params, true)?;
    Ok((table, persisted))
}

/// Literal first-k evaluation over a persisted run: a problem counts as
/// solved at k iff one of its first k samples (by sample index) passed.
/// A sensitivity check against the unbiased estimator, which this will
/// generally disagree with whenever sample order is informative.
pub fn report_literal_topk(runs_root: &Path, run_id: &str) -> Result<PassKTable, HarnessError> {
    let run_dir = runs_root.join(run_id);
    let params_path = run_dir.join("params.json");
    let outcomes_path = run_dir.join("outcomes.jsonl");
    let records_path = run_dir.join("records.jsonl");
    if !params_path.exists() || !outcomes_path.exists() || !records_path.exists() {
        return Err(HarnessError::UnknownRun(run_id.to_string()));
    }
    let read = |path: &Path| -> Result<String, HarnessError> {
        std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    };
    let params: RunParams = serde_json::from_str(&read(&params_path)?).map_err(|e| {
        HarnessError::Io {
            path: params_path,
            detail: e.to_string(),
        }
    })?;

    let mut suite_of: BTreeMap<String, Suite> = BTreeMap::new();
    for line in read(&records_path)?.lines().filter(|l| !l.trim().is_empty()) {
        let rec: PersistedRecord = serde_json::from_str(line).map_err(|e| HarnessError::Io {
            path: records_path.clone(),
            detail: e.to_string(),
        })?;
        suite_of.insert(rec.problem_id, rec.suite);
    }

    // ordered pass/fail flags per problem
    let mut flags: BTreeMap<String, Vec<(u32, bool)>> = BTreeMap::new();
    for line in read(&outcomes_path)?.lines().filter(|l| !l.trim().is_empty()) {
        let outcome: PersistedOutcome =
            serde_json::from_str(line).map_err(|e| HarnessError::Io {
                path: outcomes_path.clone(),
                detail: e.to_string(),
            })?;
        flags
            .entry(outcome.problem_id.clone())
            .or_default()
            .push((outcome.sample_index, outcome.outcome.functional_ok()));
    }

    let mut rows: BTreeMap<Suite, BTreeMap<u32, Vec<bool>>> = BTreeMap::new();
    for (problem_id, mut samples) in flags {
        let Some(&suite) = suite_of.get(&problem_id) else {
            continue;
        };
        samples.sort_by_key(|(i, _)| *i);
        for &k in &params.params.ks {
            let hit = samples
                .iter()
                .take(k as usize)
                .any(|(_, passed)| *passed);
            rows.entry(suite).or_default().entry(k).or_default().push(hit);
        }
    }
    let rows: BTreeMap<Suite, BTreeMap<u32, Score>> = rows
        .into_iter()
        .map(|(suite, cells)| {
            let cells = cells
                .into_iter()
                .map(|(k, hits)| {
                    let mean =
                        hits.iter().filter(|h| **h).count() as Score / hits.len() as Score;
                    (k, mean * 100.0)
                })
                .collect();
            (suite, cells)
        })
        .collect();
    Ok(PassKTable::new(
        format!("{} (literal top-k)", params.model_label),
        rows,
    )?)
}

/// Builds the oracle-expert registry and ground-truth table for a suite
/// whose problems carry categories and reference solutions.
pub fn oracle_setup(
    suite: &ProblemSet,
) -> Result<(ExpertRegistry, OracleTable), HarnessError> {
    let mut entries = Vec::with_capacity(suite.len());
    for problem in suite.problems() {
        let category = ground_truth_category(problem)?;
        let reference = problem
            .reference_solution
            .clone()
            .ok_or_else(|| HarnessError::MissingGroundTruth(problem.id.clone()))?;
        entries.push(OracleEntry {
            prompt: problem.prompt.clone(),
            category,
            reference,
        });
    }
    let specs: Vec<ExpertSpec> = ComplexityCategory::ALL
        .iter()
        .map(|&c| ExpertSpec {
            expert_id: format!("oracle-{}", c.name().to_ascii_lowercase()),
            category: c,
            endpoint: format!("mock://oracle/{}", c.name()),
            model_name: "oracle".to_string(),
            sampling: SamplingParams::default(),
        })
        .collect();
    let registry = crate::model::validate_registry(&specs)?;
    Ok((registry, OracleTable::new(entries)))
}

/// Result of the misroute experiment: ground-truth routing vs uniformly
/// random seeded routing, both against oracle experts.
#[derive(Debug)]
pub struct MisrouteReport {
    pub ground_truth: PassKTable,
    pub random: PassKTable,
    /// Overall pass@1 percentage of each random-routing round.
    pub per_seed_pass1: Vec<Score>,
    pub rounds: u32,
}

/// Quantifies what routing quality is worth: with oracle experts,
/// ground-truth routing passes everything, while random routing passes
/// only when the coin lands on the right tier.
pub fn misroute_experiment(
    suite: &ProblemSet,
    gateway: &Gateway,
    sim_config: &SimulatorConfig,
    params: &PassKParams,
    seed: u64,
    rounds: u32,
    verify_parallelism: usize,
) -> Result<MisrouteReport, HarnessError> {
    use rand::Rng;
    use rand::SeedableRng;

    params.validate()?;
    sim_config.validate()?;
    let (registry, _) = oracle_setup(suite)?;

    let eval_with = |category_of: &dyn Fn(usize, &Problem) -> ComplexityCategory|
     -> Result<BTreeMap<Suite, Vec<EvalRecord>>, HarnessError> {
        let mut per_suite: BTreeMap<Suite, Vec<EvalRecord>> = BTreeMap::new();
        for (idx, problem) in suite.problems().iter().enumerate() {
            let category = category_of(idx, problem);
            let decision = route(
                problem,
                &registry,
                gateway,
                &ClassifierConfig::Forced(category),
            )?;
            let samples = generate(
                problem,
                &decision,
                &registry,
                gateway,
                params.n,
                problem_seed(seed, &problem.id),
            )?;
            let single = ProblemSet::new(vec![problem.clone()])?;
            let batch = verify_batch(&samples, &single, sim_config, verify_parallelism);
            let c = batch
                .outcomes
                .values()
                .filter(|o| o.functional_ok())
                .count() as u32;
            per_suite
                .entry(problem.suite)
                .or_default()
                .push(EvalRecord::new(problem.id.clone(), params.n, c)?);
        }
        Ok(per_suite)
    };

    // ground truth: each problem routed to its declared category
    let gt_categories: Vec<ComplexityCategory> = suite
        .problems()
        .iter()
        .map(ground_truth_category)
        .collect::<Result<_, _>>()?;
    let gt_per_suite = eval_with(&|idx, _| gt_categories[idx])?;
    let ground_truth = build_table("ground-truth-routing", &gt_per_suite, params, true)?;

    // random routing, `rounds` independent seeds
    let mut random_per_suite: BTreeMap<Suite, Vec<EvalRecord>> = BTreeMap::new();
    let mut per_seed_pass1 = Vec::with_capacity(rounds as usize);
    for round in 0..rounds {
        let round_seed = seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(u64::from(round));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(round_seed);
        let picks: Vec<ComplexityCategory> = suite
            .problems()
            .iter()
            .map(|_| ComplexityCategory::ALL[rng.gen_range(0..4)])
            .collect();
        let per_suite = eval_with(&|idx, _| picks[idx])?;
        let mut all_records: Vec<EvalRecord> = Vec::new();
        for (suite_kind, records) in per_suite {
            all_records.extend(records.iter().cloned());
            random_per_suite
                .entry(suite_kind)
                .or_default()
                .extend(records);
        }
        let mean: Score = all_records
            .iter()
            .map(|r| pass_at_k::<Score>(r.n(), r.c(), 1).expect("valid record"))
            .sum::<Score>()
            / all_records.len() as Score;
        per_seed_pass1.push(mean * 100.0);
    }
    let random = build_table("random-routing", &random_per_suite, params, true)?;

    Ok(MisrouteReport {
        ground_truth,
        random,
        per_seed_pass1,
        rounds,
    })
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("problem '{0}' is missing tb.v")]
    MissingTestbench(String),
    #[error("problem '{0}' is missing prompt.txt")]
    MissingPrompt(String),
    #[error("problem '{id}': bad meta.json: {detail}")]
    BadMeta { id: String, detail: String },
    #[error("duplicate problem id '{0}'")]
    DuplicateId(String),
    #[error("problem '{0}' has no ground-truth category or reference solution")]
    MissingGroundTruth(String),
    #[error("unknown run '{0}'")]
    UnknownRun(String),
    #[error("run '{0}' already exists (pass resume to continue it)")]
    RunExists(String),
    #[error("run '{0}' was started with different parameters; refusing to resume")]
    ResumeMismatch(String),
    #[error("suite is empty")]
    EmptySuite,
    #[error("io error at {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
