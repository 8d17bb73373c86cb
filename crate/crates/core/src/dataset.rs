//! The categorized-dataset pipeline: ingest local Verilog sources,
//! deduplicate, attach fine-grained descriptions and coarse-grained
//! complexity categories through a labeling backend, partition by
//! category, corrupt for the dataset-quality experiment, and emit
//! fine-tuning manifests.
//!
//! Stages run in a fixed order (ingest, dedup, fine label, coarse label,
//! partition); each stage checks the postcondition of its predecessor on
//! the data itself, so running stages out of order fails fast regardless
//! of where the corpus came from.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{sha256_hex, Gateway, GatewayError};
use crate::model::{ComplexityCategory, DatasetEntry, ModelError};
use crate::util::run_indexed;

pub const FLAG_TRUNCATED: &str = "truncated";
pub const FLAG_FALLBACK: &str = "fallback";
pub const FLAG_CORRUPTED: &str = "corrupted";

/// Normalizes Verilog text for hashing: line endings to LF, trailing
/// whitespace stripped per line and at the end. Catches the byte-level
/// duplicates that dominate scraped corpora without any semantic analysis.
pub fn normalize_code(code: &str) -> String {
    let unified = code.replace("\r\n", "\n").replace('\r', "\n");
    let joined = unified
        .split('\n')
        .map(|line| line.trim_end())
        .collect::<Vec<_>>()
        .join("\n");
    joined.trim_end().to_string()
}

/// SHA-256 of the normalized code, lowercase hex.
pub fn content_hash(code: &str) -> String {
    sha256_hex(&normalize_code(code))
}

/// Pipeline-stage provenance: what ran, when, with which parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub timestamp_epoch_secs: u64,
    pub params: BTreeMap<String, serde_json::Value>,
}

/// The working dataset: entries plus a record of every stage applied.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub entries: Vec<DatasetEntry>,
    pub provenance: BTreeMap<String, StageInfo>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn record_stage(&mut self, stage: &str, params: BTreeMap<String, serde_json::Value>) {
        let timestamp_epoch_secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.provenance.insert(
            stage.to_string(),
            StageInfo {
                timestamp_epoch_secs,
                params,
            },
        );
    }

    fn hashes_unique(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.entries.iter().all(|e| seen.insert(&e.content_hash))
    }

    fn all_described(&self) -> bool {
        self.entries.iter().all(|e| e.description.is_some())
    }
}

/// Walks `root` and builds one entry per `.v`/`.sv` file. Files that are
/// not valid UTF-8 or cannot be read are skipped and counted.
pub fn ingest(root: &Path) -> Result<Corpus, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::Io {
            path: root.to_path_buf(),
            detail: "not a directory".into(),
        });
    }
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|x| x.to_str()),
                Some("v") | Some("sv")
            )
        })
        .collect();
    files.sort();

    let mut entries = Vec::new();
    let mut warnings: u32 = 0;
    for path in &files {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(_) => {
                warnings += 1;
                continue;
            }
        };
        let code = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(_) => {
                warnings += 1;
                continue;
            }
        };
        let hash = content_hash(&code);
        let basename = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("entry")
            .to_string();
        entries.push(DatasetEntry {
            id: format!("{basename}-{}", &hash[..8]),
            source: path.display().to_string(),
            token_estimate: crate::gateway::token_estimate(&code),
            content_hash: hash,
            code,
            description: None,
            category: None,
            flags: vec![],
        });
    }
    if entries.is_empty() {
        return Err(DatasetError::EmptyCorpus(root.to_path_buf()));
    }
    let mut corpus = Corpus {
        entries,
        provenance: BTreeMap::new(),
    };
    corpus.record_stage(
        "ingest",
        BTreeMap::from([
            ("root".to_string(), serde_json::json!(root.display().to_string())),
            ("files".to_string(), serde_json::json!(files.len())),
            ("warnings".to_string(), serde_json::json!(warnings)),
        ]),
    );
    Ok(corpus)
}

/// Number of unreadable/non-UTF8 files skipped during ingest.
pub fn ingest_warnings(corpus: &Corpus) -> u64 {
    corpus
        .provenance
        .get("ingest")
        .and_then(|s| s.params.get("warnings"))
        .and_then(|v| v.as_u64())
        .unwrap_or(0)
}

/// Collapses entries with equal content hashes, keeping the first-seen
/// source. Idempotent.
pub fn dedup(mut corpus: Corpus) -> Corpus {
    let before = corpus.entries.len();
    let mut seen = BTreeSet::new();
    corpus.entries.retain(|e| seen.insert(e.content_hash.clone()));
    let removed = before - corpus.entries.len();
    corpus.record_stage(
        "dedup",
        BTreeMap::from([("removed".to_string(), serde_json::json!(removed))]),
    );
    corpus
}

/// Options shared by both labeling passes.
#[derive(Debug, Clone)]
pub struct LabelOptions {
    pub endpoint: String,
    /// Labeling aborts when more than this fraction of entries fail.
    pub max_fail_fraction: f64,
}

impl LabelOptions {
    pub fn new(endpoint: impl Into<String>) -> Self {
        LabelOptions {
            endpoint: endpoint.into(),
            max_fail_fraction: 0.1,
        }
    }
}

/// Preamble for the description pass. Original wording; the upstream
/// service this pipeline imitates never published its prompt.
pub const DESCRIBE_PREAMBLE: &str = "You are documenting a hardware design. \
Write one concise natural-language description of what the following \
Verilog code implements. Reply with the description only.";

const TRUNCATION_MARKER: &str = "\n// [code truncated to fit the prompt token budget]";

/// Preamble for the categorization pass: the four tier definitions,
/// followed by the instruction to answer with a single tier name.
pub fn categorize_preamble() -> String {
    let mut s = String::from(
        "Classify the hardware design below into exactly one of four design-complexity categories:\n",
    );
    for (i, tier) in ComplexityCategory::ALL.iter().enumerate() {
        s.push_str(&format!("{}) {};\n", i + 1, tier.definition()));
    }
    s.push_str("Reply with a single word: Basic, Intermediate, Advanced, or Expert.");
    s
}

/// Truncates `code` so that `preamble + code` fits the gateway's token
/// budget under the estimation rule, leaving room for the marker comment.
/// Returns the (possibly shortened) code and whether truncation happened.
fn fit_to_budget(gateway: &Gateway, preamble: &str, code: &str) -> (String, bool) {
    let limit = gateway.config().token_limit;
    let divisor = u64::from(gateway.config().token_divisor.max(1));
    let preamble_tokens = gateway.token_estimate(preamble);
    let marker_tokens = gateway.token_estimate(TRUNCATION_MARKER) + 1;
    if preamble_tokens + gateway.token_estimate(code) < limit {
        return (code.to_string(), false);
    }
    let budget_tokens = limit
        .saturating_sub(preamble_tokens)
        .saturating_sub(marker_tokens);
    let budget_chars = (budget_tokens.saturating_mul(divisor)) as usize;
    let mut kept: String = code.chars().take(budget_chars).collect();
    kept.push_str(TRUNCATION_MARKER);
    (kept, true)
}

/// Attaches a description to every entry via the labeling backend.
/// Entries that still fail after the gateway's retries are dropped and
/// reported in provenance; more than `max_fail_fraction` failures aborts.
pub fn fine_grain_label(
    corpus: Corpus,
    gateway: &Gateway,
    opts: &LabelOptions,
) -> Result<Corpus, DatasetError> {
    if !corpus.hashes_unique() {
        return Err(DatasetError::StageOrder(
            "fine_grain_label requires a deduplicated corpus; run dedup first".into(),
        ));
    }
    let total = corpus.entries.len();
    let bound = gateway.config().max_in_flight;
    let truncated_count = Mutex::new(0usize);

    let results: Vec<Result<(String, bool), GatewayError>> =
        run_indexed(total, bound, |i| {
            let entry = &corpus.entries[i];
            let (code, truncated) = fit_to_budget(gateway, DESCRIBE_PREAMBLE, &entry.code);
            if truncated {
                *truncated_count.lock().expect("count lock") += 1;
            }
            gateway
                .label_query(&opts.endpoint, DESCRIBE_PREAMBLE, &code)
                .and_then(|d| {
                    if d.trim().is_empty() {
                        Err(GatewayError::MalformedResponse("empty description".into()))
                    } else {
                        Ok((d, truncated))
                    }
                })
        });

    let mut entries = Vec::with_capacity(total);
    let mut skipped = Vec::new();
    for (entry, result) in corpus.entries.into_iter().zip(results) {
        match result {
            Ok((description, truncated)) => {
                let mut e = entry;
                e.description = Some(description.trim().to_string());
                if truncated {
                    e.set_flag(FLAG_TRUNCATED);
                }
                entries.push(e);
            }
            Err(err) => skipped.push((entry.id, err.to_string())),
        }
    }
    let failed = skipped.len();
    if failed as f64 > opts.max_fail_fraction * total as f64 {
        return Err(DatasetError::LabelingFailed { failed, total });
    }
    let mut corpus = Corpus {
        entries,
        provenance: corpus.provenance,
    };
    corpus.record_stage(
        "fine_grain_label",
        BTreeMap::from([
            ("endpoint".to_string(), serde_json::json!(opts.endpoint)),
            (
                "skipped".to_string(),
                serde_json::json!(skipped.iter().map(|(id, _)| id).collect::<Vec<_>>()),
            ),
            (
                "truncated".to_string(),
                serde_json::json!(*truncated_count.lock().expect("count lock")),
            ),
        ]),
    );
    Ok(corpus)
}

/// Picks the tier name appearing earliest in the response text,
/// case-insensitively.
pub fn parse_category_response(response: &str) -> Option<ComplexityCategory> {
    let lower = response.to_ascii_lowercase();
    ComplexityCategory::ALL
        .iter()
        .filter_map(|&c| lower.find(&c.name().to_ascii_lowercase()).map(|pos| (pos, c)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, c)| c)
}

/// Assigns a complexity category to every described entry. Responses that
/// name no tier trigger one re-query; a second miss falls back to
/// `Intermediate` with a flag.
pub fn coarse_grain_label(
    corpus: Corpus,
    gateway: &Gateway,
    opts: &LabelOptions,
) -> Result<Corpus, DatasetError> {
    if !corpus.all_described() {
        return Err(DatasetError::StageOrder(
            "coarse_grain_label requires descriptions; run fine_grain_label first".into(),
        ));
    }
    let preamble = categorize_preamble();
    let total = corpus.entries.len();
    let bound = gateway.config().max_in_flight;

    let results: Vec<Result<(ComplexityCategory, bool), GatewayError>> =
        run_indexed(total, bound, |i| {
            let entry = &corpus.entries[i];
            let description = entry.description.as_deref().expect("checked above");
            let body = format!("Description:\n{description}\n\nVerilog code:\n{}", entry.code);
            let (content, _) = fit_to_budget(gateway, &preamble, &body);
            let mut answer = gateway.label_query(&opts.endpoint, &preamble, &content)?;
            if parse_category_response(&answer).is_none() {
                answer = gateway.label_query(&opts.endpoint, &preamble, &content)?;
            }
            match parse_category_response(&answer) {
                Some(category) => Ok((category, false)),
                None => Ok((ComplexityCategory::Intermediate, true)),
            }
        });

    let mut entries = Vec::with_capacity(total);
    let mut skipped = Vec::new();
    let mut fallback_count = 0usize;
    for (entry, result) in corpus.entries.into_iter().zip(results) {
        match result {
            Ok((category, fell_back)) => {
                let mut e = entry;
                e.category = Some(category);
                if fell_back {
                    e.set_flag(FLAG_FALLBACK);
                    fallback_count += 1;
                }
                entries.push(e);
            }
            Err(err) => skipped.push((entry.id, err.to_string())),
        }
    }
    let failed = skipped.len();
    if failed as f64 > opts.max_fail_fraction * total as f64 {
        return Err(DatasetError::LabelingFailed { failed, total });
    }
    let mut corpus = Corpus {
        entries,
        provenance: corpus.provenance,
    };
    corpus.record_stage(
        "coarse_grain_label",
        BTreeMap::from([
            ("endpoint".to_string(), serde_json::json!(opts.endpoint)),
            (
                "skipped".to_string(),
                serde_json::json!(skipped.iter().map(|(id, _)| id).collect::<Vec<_>>()),
            ),
            ("fallback".to_string(), serde_json::json!(fallback_count)),
        ]),
    );
    Ok(corpus)
}

/// Splits a fully-categorized corpus into four per-tier lists. The result
/// is an exact partition: disjoint, union equals the input.
pub fn partition(
    corpus: &Corpus,
) -> Result<BTreeMap<ComplexityCategory, Vec<DatasetEntry>>, DatasetError> {
    let mut out: BTreeMap<ComplexityCategory, Vec<DatasetEntry>> = ComplexityCategory::ALL
        .iter()
        .map(|&c| (c, Vec::new()))
        .collect();
    for entry in &corpus.entries {
        let category = entry
            .category
            .ok_or_else(|| DatasetError::UncategorizedEntry(entry.id.clone()))?;
        out.get_mut(&category).expect("all tiers present").push(entry.clone());
    }
    Ok(out)
}

/// Permutes descriptions across entries with a seeded derangement: no
/// entry keeps a description equal to its original one. Codes and the
/// description multiset are unchanged. Deterministic per seed.
pub fn corrupt_shuffle(corpus: Corpus, seed: u64) -> Result<Corpus, DatasetError> {
    let n = corpus.entries.len();
    if n < 2 {
        return Err(DatasetError::TooSmall(n));
    }
    if !corpus.all_described() {
        return Err(DatasetError::StageOrder(
            "corrupt_shuffle requires descriptions on every entry".into(),
        ));
    }
    let originals: Vec<String> = corpus
        .entries
        .iter()
        .map(|e| e.description.clone().expect("checked above"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut attempts = 0u32;
    const MAX_ATTEMPTS: u32 = 10_000;
    loop {
        attempts += 1;
        perm.shuffle(&mut rng);
        let deranged = perm
            .iter()
            .enumerate()
            .all(|(i, &j)| originals[j] != originals[i]);
        if deranged {
            break;
        }
        if attempts >= MAX_ATTEMPTS {
            return Err(DatasetError::DerangementExhausted(attempts));
        }
    }

    let mut entries = corpus.entries;
    for (i, &j) in perm.iter().enumerate() {
        entries[i].description = Some(originals[j].clone());
        entries[i].set_flag(FLAG_CORRUPTED);
    }
    let mut corpus = Corpus {
        entries,
        provenance: corpus.provenance,
    };
    corpus.record_stage(
        "corrupt_shuffle",
        BTreeMap::from([
            ("seed".to_string(), serde_json::json!(seed)),
            ("attempts".to_string(), serde_json::json!(attempts)),
        ]),
    );
    Ok(corpus)
}

/// Writes entries as JSONL, one per line, in order.
pub fn export_dataset(entries: &[DatasetEntry], path: &Path) -> Result<(), DatasetError> {
    let io_err = |e: std::io::Error| DatasetError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for entry in entries {
        let line = serde_json::to_string(entry).expect("entry serializes");
        file.write_all(line.as_bytes()).map_err(io_err)?;
        file.write_all(b"\n").map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

/// Loads a JSONL dataset, validating the schema and entry invariants.
/// Errors carry the 1-based line number.
pub fn load_dataset(path: &Path) -> Result<Corpus, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let reader = BufReader::new(file);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: DatasetEntry =
            serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
                line: i + 1,
                detail: e.to_string(),
            })?;
        entry.validate().map_err(|e| DatasetError::Schema {
            line: i + 1,
            detail: e.to_string(),
        })?;
        entries.push(entry);
    }
    let mut corpus = Corpus {
        entries,
        provenance: BTreeMap::new(),
    };
    corpus.record_stage(
        "load",
        BTreeMap::from([(
            "path".to_string(),
            serde_json::json!(path.display().to_string()),
        )]),
    );
    Ok(corpus)
}

/// Emitted configuration for one per-category fine-tuning job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneManifest {
    pub category: ComplexityCategory,
    pub dataset_path: String,
    pub base_model: String,
    pub learning_rate: f64,
    pub epochs: Vec<u32>,
}

impl FinetuneManifest {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.learning_rate <= 0.0 {
            return Err(ModelError::Invalid("learning_rate must be > 0".into()));
        }
        if self.epochs.is_empty() || self.epochs.contains(&0) {
            return Err(ModelError::Invalid(
                "epochs must be a non-empty list of positive integers".into(),
            ));
        }
        Ok(())
    }
}

/// Default hyperparameters by base-model family.
pub fn family_defaults(base_model: &str) -> Option<(f64, Vec<u32>)> {
    let lower = base_model.to_ascii_lowercase();
    if lower.contains("codegen") {
        Some((5e-5, vec![1, 5, 10]))
    } else if lower.contains("gemma") {
        Some((2e-4, vec![1, 5, 10, 20]))
    } else {
        None
    }
}

/// Writes one per-category dataset slice plus its manifest under
/// `out_dir`. Hyperparameters come from the base-model family unless
/// explicitly overridden.
pub fn emit_manifests(
    partition: &BTreeMap<ComplexityCategory, Vec<DatasetEntry>>,
    base_model: &str,
    out_dir: &Path,
    overrides: Option<(f64, Vec<u32>)>,
) -> Result<Vec<FinetuneManifest>, DatasetError> {
    let (learning_rate, epochs) = match overrides.or_else(|| family_defaults(base_model)) {
        Some(hp) => hp,
        None => return Err(DatasetError::UnknownBaseModelFamily(base_model.to_string())),
    };
    std::fs::create_dir_all(out_dir).map_err(|e| DatasetError::Io {
        path: out_dir.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mut manifests = Vec::new();
    for tier in ComplexityCategory::ALL {
        let entries = partition.get(&tier).map(Vec::as_slice).unwrap_or(&[]);
        let slice_name = format!("{}.jsonl", tier.name().to_ascii_lowercase());
        let slice_path = out_dir.join(&slice_name);
        export_dataset(entries, &slice_path)?;
        let manifest = FinetuneManifest {
            category: tier,
            dataset_path: slice_path.display().to_string(),
            base_model: base_model.to_string(),
            learning_rate,
            epochs: epochs.clone(),
        };
        manifest.validate()?;
        let manifest_path = out_dir.join(format!("manifest-{}.json", tier.name().to_ascii_lowercase()));
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&manifest_path, json).map_err(|e| DatasetError::Io {
            path: manifest_path.clone(),
            detail: e.to_string(),
        })?;
        manifests.push(manifest);
    }
    Ok(manifests)
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no .v/.sv files under {0}")]
    EmptyCorpus(PathBuf),
    #[error("io error at {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("labeling failed for {failed} of {total} entries")]
    LabelingFailed { failed: usize, total: usize },
    #[error("entry '{0}' has no category")]
    UncategorizedEntry(String),
    #[error("corpus too small to shuffle ({0} entries; need at least 2)")]
    TooSmall(usize),
    #[error("could not find a derangement after {0} attempts (descriptions too uniform)")]
    DerangementExhausted(u32),
    #[error("stage order violation: {0}")]
    StageOrder(String),
    #[error("schema error at line {line}: {detail}")]
    Schema { line: usize, detail: String },
    #[error("unknown base-model family '{0}' and no explicit hyperparameters")]
    UnknownBaseModelFamily(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GatewayConfig;

    fn entry(id: &str, code: &str) -> DatasetEntry {
        DatasetEntry {
            id: id.to_string(),
            source: format!("src/{id}.v"),
            token_estimate: crate::gateway::token_estimate(code),
            content_hash: content_hash(code),
            code: code.to_string(),
            description: None,
            category: None,
            flags: vec![],
        }
    }

    fn described(id: &str, code: &str, desc: &str) -> DatasetEntry {
        let mut e = entry(id, code);
        e.description = Some(desc.to_string());
        e
    }

    fn corpus_of(entries: Vec<DatasetEntry>) -> Corpus {
        Corpus {
            entries,
            provenance: BTreeMap::new(),
        }
    }

    fn fast_gateway() -> Gateway {
        Gateway::new(GatewayConfig {
            rate_limit_rps: 0.0,
            backoff_base_ms: 1,
            ..GatewayConfig::default()
        })
    }

    #[test]
    fn normalization_collapses_whitespace_variants() {
        let a = "module m;\nendmodule  \r\n";
        let b = "module m;\nendmodule\n";
        let c = "module m;\nendmodule";
        assert_eq!(normalize_code(a), normalize_code(b));
        assert_eq!(normalize_code(b), normalize_code(c));
        assert_eq!(content_hash(a), content_hash(c));
        // semantically different content hashes differently
        assert_ne!(content_hash("module m; endmodule"), content_hash("module n; endmodule"));
    }

    #[test]
    fn ingest_filters_extensions_and_counts_warnings() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.v"), "module a; endmodule").unwrap();
        std::fs::write(dir.path().join("b.sv"), "module b; endmodule").unwrap();
        std::fs::write(dir.path().join("c.v"), "module c; endmodule").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "not verilog").unwrap();
        std::fs::write(dir.path().join("bad.v"), [0xffu8, 0xfe, 0x00, 0x01]).unwrap();
        let corpus = ingest(dir.path()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(ingest_warnings(&corpus), 1);
        // id carries basename and hash prefix
        assert!(corpus.entries.iter().any(|e| e.id.starts_with("a.v-")));
    }

    #[test]
    fn ingest_empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest(dir.path()),
            Err(DatasetError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn dedup_collapses_normalized_duplicates() {
        let corpus = corpus_of(vec![
            entry("a", "module m;\nendmodule\n"),
            entry("b", "module m;\nendmodule  \r\n"),
            entry("c", "module other; endmodule"),
        ]);
        let out = dedup(corpus);
        assert_eq!(out.len(), 2);
        assert_eq!(out.entries[0].id, "a"); // first-seen kept
        let again = dedup(out.clone());
        assert_eq!(again.entries, out.entries);
    }

    #[test]
    fn fine_label_requires_dedup() {
        let corpus = corpus_of(vec![
            entry("a", "module m; endmodule"),
            entry("b", "module m; endmodule"),
        ]);
        let gw = fast_gateway();
        let opts = LabelOptions::new("mock://labeler");
        assert!(matches!(
            fine_grain_label(corpus, &gw, &opts),
            Err(DatasetError::StageOrder(_))
        ));
    }

    #[test]
    fn fine_label_describes_all_entries() {
        let corpus = corpus_of(vec![
            entry("a", "module a(input x, output y); assign y = x; endmodule"),
            entry("b", "module b; // fsm\nendmodule"),
        ]);
        let gw = fast_gateway();
        let opts = LabelOptions::new("mock://labeler");
        let out = fine_grain_label(corpus, &gw, &opts).unwrap();
        assert!(out.entries.iter().all(|e| e.description.is_some()));
        assert!(out.entries[1].description.as_deref().unwrap().contains("finite state machine"));
    }

    #[test]
    fn fine_label_truncates_oversized_code() {
        let big_code = format!("module big;\n// {}\nendmodule", "x".repeat(4096 * 4));
        let corpus = corpus_of(vec![entry("big", &big_code)]);
        let gw = fast_gateway();
        let opts = LabelOptions::new("mock://labeler");
        let out = fine_grain_label(corpus, &gw, &opts).unwrap();
        assert!(out.entries[0].has_flag(FLAG_TRUNCATED));
        assert!(out.entries[0].description.is_some());
    }

    #[test]
    fn fine_label_failure_threshold() {
        // scripted mock with no fixture file: every query fails
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("none.jsonl");
        let corpus = corpus_of(vec![
            entry("a", "module a; endmodule"),
            entry("b", "module b; endmodule"),
            entry("c", "module c; endmodule"),
            entry("d", "module d; endmodule"),
            entry("e", "module e; endmodule"),
        ]);
        let gw = fast_gateway();
        let opts = LabelOptions::new(format!("mock://scripted{}", missing.display()));
        match fine_grain_label(corpus, &gw, &opts) {
            Err(DatasetError::LabelingFailed { failed, total }) => {
                assert_eq!((failed, total), (5, 5));
            }
            other => panic!("expected LabelingFailed, got {other:?}"),
        }
    }

    #[test]
    fn fine_label_partial_failures_below_and_above_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = dir.path().join("partial.jsonl");
        let entries: Vec<DatasetEntry> = (0..5)
            .map(|i| entry(&format!("e{i}"), &format!("module m{i}; endmodule")))
            .collect();
        // fixture covers only the first three entries; the other two fail
        let mut lines = String::new();
        for e in &entries[..3] {
            let prompt = format!("{DESCRIBE_PREAMBLE}\n\n{}", e.code);
            let line = serde_json::json!({
                "prompt_sha256": sha256_hex(&prompt),
                "responses": ["a small module"],
            });
            lines.push_str(&format!("{line}\n"));
        }
        std::fs::write(&fixture, lines).unwrap();
        let gw = fast_gateway();
        let endpoint = format!("mock://scripted{}", fixture.display());

        // 2 of 5 failing (40%) exceeds the default 10% threshold
        let opts = LabelOptions::new(&endpoint);
        match fine_grain_label(corpus_of(entries.clone()), &gw, &opts) {
            Err(DatasetError::LabelingFailed { failed, total }) => {
                assert_eq!((failed, total), (2, 5));
            }
            other => panic!("expected LabelingFailed, got {other:?}"),
        }

        // with a permissive threshold the failures are skipped instead
        let mut lenient = LabelOptions::new(&endpoint);
        lenient.max_fail_fraction = 0.5;
        let out = fine_grain_label(corpus_of(entries), &gw, &lenient).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.entries.iter().all(|e| e.description.is_some()));
        let skipped = out.provenance["fine_grain_label"].params["skipped"]
            .as_array()
            .unwrap()
            .len();
        assert_eq!(skipped, 2);
    }

    #[test]
    fn category_response_parsing() {
        assert_eq!(
            parse_category_response("This is Advanced work"),
            Some(ComplexityCategory::Advanced)
        );
        assert_eq!(
            parse_category_response("basic or intermediate? I say basic"),
            Some(ComplexityCategory::Basic)
        );
        assert_eq!(parse_category_response("dunno"), None);
        // first by position wins
        assert_eq!(
            parse_category_response("Expert? no: Basic"),
            Some(ComplexityCategory::Expert)
        );
    }

    #[test]
    fn coarse_label_requires_descriptions() {
        let corpus = corpus_of(vec![entry("a", "module a; endmodule")]);
        let gw = fast_gateway();
        let opts = LabelOptions::new("mock://labeler");
        assert!(matches!(
            coarse_grain_label(corpus, &gw, &opts),
            Err(DatasetError::StageOrder(_))
        ));
    }

    #[test]
    fn coarse_label_assigns_categories_and_fallback() {
        let corpus = corpus_of(vec![
            described("fsm", "module f; // fsm\nendmodule", "a finite state machine"),
            described("plain", "module p;\nendmodule", "something odd"),
        ]);
        let gw = fast_gateway();
        let opts = LabelOptions::new("mock://labeler");
        let out = coarse_grain_label(corpus, &gw, &opts).unwrap();
        assert_eq!(out.entries[0].category, Some(ComplexityCategory::Advanced));
        // labeler answers "Basic" for unknown content, so no fallback here
        assert_eq!(out.entries[1].category, Some(ComplexityCategory::Basic));
        assert!(!out.entries[1].has_flag(FLAG_FALLBACK));
    }

    #[test]
    fn coarse_label_fallback_on_unparsable() {
        // scripted fixture that answers gibberish both times
        let dir = tempfile::tempdir().unwrap();
        let fixture = dir.path().join("fixture.jsonl");
        let e = described("a", "module a; endmodule", "plain wiring");
        let preamble = categorize_preamble();
        let body = format!(
            "Description:\nplain wiring\n\nVerilog code:\n{}",
            e.code
        );
        let prompt = format!("{preamble}\n\n{body}");
        let line = serde_json::json!({
            "prompt_sha256": sha256_hex(&prompt),
            "responses": ["dunno", "dunno"],
        });
        std::fs::write(&fixture, format!("{line}\n")).unwrap();
        let corpus = corpus_of(vec![e]);
        let gw = fast_gateway();
        let opts = LabelOptions::new(format!("mock://scripted{}", fixture.display()));
        let out = coarse_grain_label(corpus, &gw, &opts).unwrap();
        assert_eq!(out.entries[0].category, Some(ComplexityCategory::Intermediate));
        assert!(out.entries[0].has_flag(FLAG_FALLBACK));
    }

    #[test]
    fn partition_is_exact() {
        let mut entries = Vec::new();
        let spec = [
            (ComplexityCategory::Basic, 4),
            (ComplexityCategory::Intermediate, 3),
            (ComplexityCategory::Advanced, 2),
            (ComplexityCategory::Expert, 1),
        ];
        for (cat, count) in spec {
            for i in 0..count {
                let mut e = described(
                    &format!("{cat}-{i}"),
                    &format!("module {cat}_{i}; endmodule"),
                    "d",
                );
                e.category = Some(cat);
                entries.push(e);
            }
        }
        let corpus = corpus_of(entries);
        let parts = partition(&corpus).unwrap();
        let sizes: Vec<usize> = ComplexityCategory::ALL.iter().map(|c| parts[c].len()).collect();
        assert_eq!(sizes, vec![4, 3, 2, 1]);
        assert_eq!(parts.values().map(Vec::len).sum::<usize>(), corpus.len());
    }

    #[test]
    fn partition_rejects_uncategorized() {
        let corpus = corpus_of(vec![described("a", "module a; endmodule", "d")]);
        assert!(matches!(
            partition(&corpus),
            Err(DatasetError::UncategorizedEntry(id)) if id == "a"
        ));
    }

    #[test]
    fn corrupt_shuffle_is_a_derangement_and_deterministic() {
        let corpus = corpus_of(vec![
            described("a", "module a; endmodule", "desc-a"),
            described("b", "module b; endmodule", "desc-b"),
            described("c", "module c; endmodule", "desc-c"),
        ]);
        let out1 = corrupt_shuffle(corpus.clone(), 7).unwrap();
        let out2 = corrupt_shuffle(corpus.clone(), 7).unwrap();
        assert_eq!(out1.entries, out2.entries);
        for (orig, new) in corpus.entries.iter().zip(&out1.entries) {
            assert_eq!(orig.code, new.code);
            assert_ne!(orig.description, new.description);
            assert!(new.has_flag(FLAG_CORRUPTED));
        }
        // multiset of descriptions preserved
        let mut before: Vec<_> = corpus.entries.iter().map(|e| e.description.clone()).collect();
        let mut after: Vec<_> = out1.entries.iter().map(|e| e.description.clone()).collect();
        before.sort();
        after.sort();
        assert_eq!(before, after);
    }

    #[test]
    fn corrupt_shuffle_too_small() {
        let corpus = corpus_of(vec![described("a", "module a; endmodule", "d")]);
        assert!(matches!(
            corrupt_shuffle(corpus, 1),
            Err(DatasetError::TooSmall(1))
        ));
    }

    #[test]
    fn jsonl_round_trip_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut e = described("a", "module a; endmodule", "a wire");
        e.category = Some(ComplexityCategory::Basic);
        let entries = vec![e, entry("b", "module b; endmodule")];
        export_dataset(&entries, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.entries, entries);

        // empty list round-trips to an empty corpus
        let empty = dir.path().join("empty.jsonl");
        export_dataset(&[], &empty).unwrap();
        assert!(load_dataset(&empty).unwrap().is_empty());

        // missing "code" field reports the line number
        let bad = dir.path().join("bad.jsonl");
        let good_line = serde_json::to_string(&entries[0]).unwrap();
        std::fs::write(
            &bad,
            format!("{good_line}\n{{\"id\":\"x\",\"source\":\"s\",\"token_estimate\":1,\"content_hash\":\"h\"}}\n"),
        )
        .unwrap();
        match load_dataset(&bad) {
            Err(DatasetError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected Schema error, got {other:?}"),
        }
    }

    #[test]
    fn manifests_use_family_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let mut parts: BTreeMap<ComplexityCategory, Vec<DatasetEntry>> = BTreeMap::new();
        for c in ComplexityCategory::ALL {
            let mut e = described(&format!("e-{c}"), &format!("module m_{c}; endmodule"), "d");
            e.category = Some(c);
            parts.insert(c, vec![e]);
        }
        let manifests = emit_manifests(&parts, "codegen-2b", dir.path(), None).unwrap();
        assert_eq!(manifests.len(), 4);
        for m in &manifests {
            assert_eq!(m.learning_rate, 5e-5);
            assert_eq!(m.epochs, vec![1, 5, 10]);
        }
        let gemma = emit_manifests(&parts, "GEMMA-7B", dir.path(), None).unwrap();
        assert!(gemma.iter().all(|m| m.learning_rate == 2e-4 && m.epochs == vec![1, 5, 10, 20]));
        assert!(matches!(
            emit_manifests(&parts, "mystery", dir.path(), None),
            Err(DatasetError::UnknownBaseModelFamily(_))
        ));
        // explicit overrides rescue unknown families
        let custom = emit_manifests(&parts, "mystery", dir.path(), Some((1e-4, vec![2]))).unwrap();
        assert!(custom.iter().all(|m| m.learning_rate == 1e-4));
        // manifest files exist and parse
        let manifest_path = dir.path().join("manifest-basic.json");
        let parsed: FinetuneManifest =
            serde_json::from_str(&std::fs::read_to_string(manifest_path).unwrap()).unwrap();
        assert_eq!(parsed.category, ComplexityCategory::Basic);
        assert!(dir.path().join("basic.jsonl").exists());
    }
}
