//! Shared domain types: complexity tiers, dataset entries, problems,
//! generation samples, verification outcomes, and the expert registry.
//!
//! Everything here is an immutable value object, safe to clone and share
//! across tasks. Invariants that the rest of the system relies on
//! (e.g. `functional_ok` implies `syntax_ok`) are enforced at construction
//! and on deserialization.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

/// The four-tier design-complexity taxonomy that drives routing and
/// dataset partitioning. Ordering is total: `Basic < Intermediate <
/// Advanced < Expert`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum ComplexityCategory {
    Basic,
    Intermediate,
    Advanced,
    Expert,
}

impl ComplexityCategory {
    /// All four tiers in ascending order.
    pub const ALL: [ComplexityCategory; 4] = [
        ComplexityCategory::Basic,
        ComplexityCategory::Intermediate,
        ComplexityCategory::Advanced,
        ComplexityCategory::Expert,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ComplexityCategory::Basic => "Basic",
            ComplexityCategory::Intermediate => "Intermediate",
            ComplexityCategory::Advanced => "Advanced",
            ComplexityCategory::Expert => "Expert",
        }
    }

    /// Case-insensitive parse of a tier name.
    pub fn parse_name(s: &str) -> Option<ComplexityCategory> {
        let t = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(t))
    }

    /// The standard definition shown to classifier and labeling backends.
    pub fn definition(&self) -> &'static str {
        match self {
            ComplexityCategory::Basic => {
                "Basic, encompassing straightforward Verilog codes like wirings and elementary gate designs"
            }
            ComplexityCategory::Intermediate => {
                "Intermediate, covering uncomplicated components such as multiplexers, adders, and arithmetic units"
            }
            ComplexityCategory::Advanced => {
                "Advanced, featuring more complex designs like sequential circuits and finite state machines"
            }
            ComplexityCategory::Expert => {
                "Expert, typically consisting of composite designs that integrate elements from the earlier categories"
            }
        }
    }
}

impl fmt::Display for ComplexityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which evaluation suite a problem belongs to. Ordering matches the
/// customary table layout: Machine row first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Machine,
    Human,
}

impl Suite {
    pub fn label(&self) -> &'static str {
        match self {
            Suite::Human => "Verilog-Human",
            Suite::Machine => "Verilog-Machine",
        }
    }

    pub fn parse_label(s: &str) -> Option<Suite> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human" | "verilog-human" => Some(Suite::Human),
            "machine" | "verilog-machine" => Some(Suite::Machine),
            _ => None,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One Verilog source with its fine-grained description and coarse-grained
/// category labels, as produced and consumed by the dataset pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub source: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ComplexityCategory>,
    pub token_estimate: u64,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl DatasetEntry {
    /// Coarse labeling consumes the fine label: a category without a
    /// description is a malformed entry.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.category.is_some() && self.description.is_none() {
            return Err(ModelError::Invalid(format!(
                "entry '{}' has a category but no description",
                self.id
            )));
        }
        Ok(())
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// Adds a flag, keeping the flag list sorted and duplicate-free so
    /// serialized entries are byte-stable.
    pub fn set_flag(&mut self, flag: &str) {
        if !self.has_flag(flag) {
            self.flags.push(flag.to_string());
            self.flags.sort();
        }
    }
}

/// An evaluation task: prompt plus testbench, belonging to one suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub suite: Suite,
    pub prompt: String,
    pub testbench: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<String>,
    /// Ground-truth complexity from suite metadata, when declared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ComplexityCategory>,
}

impl Problem {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.prompt.trim().is_empty() {
            return Err(ModelError::Invalid(format!(
                "problem '{}' has an empty prompt",
                self.id
            )));
        }
        if self.testbench.trim().is_empty() {
            return Err(ModelError::Invalid(format!(
                "problem '{}' has an empty testbench",
                self.id
            )));
        }
        Ok(())
    }
}

/// A loaded, validated collection of problems with unique ids.
#[derive(Debug, Clone, Default)]
pub struct ProblemSet {
    problems: Vec<Problem>,
}

impl ProblemSet {
    pub fn new(problems: Vec<Problem>) -> Result<Self, ModelError> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &problems {
            p.validate()?;
            if !seen.insert(p.id.clone()) {
                return Err(ModelError::DuplicateProblemId(p.id.clone()));
            }
        }
        Ok(ProblemSet { problems })
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }
}

/// One generated code sample for a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub problem_id: String,
    pub sample_index: u32,
    pub expert_id: String,
    pub category: ComplexityCategory,
    pub code: String,
    pub latency_ms: u64,
}

/// Syntax/functional verdict for one sample.
///
/// Constructed only through the methods below, which make a value with
/// `functional_ok && !syntax_ok` or `timed_out && functional_ok`
/// unrepresentable. Deserialization rejects such values too.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerifyOutcome")]
pub struct VerifyOutcome {
    syntax_ok: bool,
    functional_ok: bool,
    detail: String,
    timed_out: bool,
}

#[derive(Deserialize)]
struct RawVerifyOutcome {
    syntax_ok: bool,
    functional_ok: bool,
    detail: String,
    timed_out: bool,
}

impl TryFrom<RawVerifyOutcome> for VerifyOutcome {
    type Error = ModelError;

    fn try_from(raw: RawVerifyOutcome) -> Result<Self, ModelError> {
        VerifyOutcome::new(raw.syntax_ok, raw.functional_ok, raw.detail, raw.timed_out)
    }
}

impl VerifyOutcome {
    pub fn new(
        syntax_ok: bool,
        functional_ok: bool,
        detail: String,
        timed_out: bool,
    ) -> Result<Self, ModelError> {
        if functional_ok && !syntax_ok {
            return Err(ModelError::Invalid(
                "functional_ok requires syntax_ok".into(),
            ));
        }
        if timed_out && functional_ok {
            return Err(ModelError::Invalid(
                "a timed-out check cannot be functionally correct".into(),
            ));
        }
        Ok(VerifyOutcome {
            syntax_ok,
            functional_ok,
            detail,
            timed_out,
        })
    }

    pub fn passed(detail: impl Into<String>) -> Self {
        VerifyOutcome {
            syntax_ok: true,
            functional_ok: true,
            detail: detail.into(),
            timed_out: false,
        }
    }

    /// Compiled, but the simulation did not report success.
    pub fn functional_failure(detail: impl Into<String>) -> Self {
        VerifyOutcome {
            syntax_ok: true,
            functional_ok: false,
            detail: detail.into(),
            timed_out: false,
        }
    }

    pub fn syntax_failure(detail: impl Into<String>) -> Self {
        VerifyOutcome {
            syntax_ok: false,
            functional_ok: false,
            detail: detail.into(),
            timed_out: false,
        }
    }

    /// Timeout during compile (`syntax_ok = false`) or simulation
    /// (`syntax_ok = true`).
    pub fn timeout(syntax_ok: bool, detail: impl Into<String>) -> Self {
        VerifyOutcome {
            syntax_ok,
            functional_ok: false,
            detail: detail.into(),
            timed_out: true,
        }
    }

    pub fn syntax_ok(&self) -> bool {
        self.syntax_ok
    }

    pub fn functional_ok(&self) -> bool {
        self.functional_ok
    }

    pub fn detail(&self) -> &str {
        &self.detail
    }

    pub fn timed_out(&self) -> bool {
        self.timed_out
    }
}

/// Per-problem evaluation tally: `n` samples generated, `c` of them
/// functionally correct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawEvalRecord")]
pub struct EvalRecord {
    problem_id: String,
    n: u32,
    c: u32,
}

#[derive(Deserialize)]
struct RawEvalRecord {
    problem_id: String,
    n: u32,
    c: u32,
}

impl TryFrom<RawEvalRecord> for EvalRecord {
    type Error = ModelError;

    fn try_from(raw: RawEvalRecord) -> Result<Self, ModelError> {
        EvalRecord::new(raw.problem_id, raw.n, raw.c)
    }
}

impl EvalRecord {
    pub fn new(problem_id: impl Into<String>, n: u32, c: u32) -> Result<Self, ModelError> {
        let problem_id = problem_id.into();
        if n < 1 {
            return Err(ModelError::Invalid(format!(
                "record '{problem_id}': n must be >= 1"
            )));
        }
        if c > n {
            return Err(ModelError::Invalid(format!(
                "record '{problem_id}': c = {c} exceeds n = {n}"
            )));
        }
        Ok(EvalRecord { problem_id, n, c })
    }

    pub fn problem_id(&self) -> &str {
        &self.problem_id
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn c(&self) -> u32 {
        self.c
    }
}

/// Aggregated pass@k values per suite, in the result-table shape:
/// suite rows by increasing k columns. Values are percentages in
/// [0, 100], kept at full precision and rounded only when rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassKTable {
    pub model_label: String,
    pub rows: BTreeMap<Suite, BTreeMap<u32, f64>>,
}

impl PassKTable {
    /// Validates the shape: values in [0, 100], nondecreasing in k
    /// within a suite.
    pub fn new(
        model_label: impl Into<String>,
        rows: BTreeMap<Suite, BTreeMap<u32, f64>>,
    ) -> Result<Self, ModelError> {
        for (suite, cells) in &rows {
            let mut prev: Option<f64> = None;
            for (k, v) in cells {
                if !(0.0..=100.0).contains(v) {
                    return Err(ModelError::Invalid(format!(
                        "{suite} pass@{k} = {v} outside [0, 100]"
                    )));
                }
                if let Some(p) = prev {
                    // allow for float fuzz between adjacent k columns
                    if *v < p - 1e-9 {
                        return Err(ModelError::Invalid(format!(
                            "{suite} pass@{k} decreases from {p} to {v}"
                        )));
                    }
                }
                prev = Some(*v);
            }
        }
        Ok(PassKTable {
            model_label: model_label.into(),
            rows,
        })
    }
}

/// Sampling parameters forwarded to a generation backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.8,
            top_p: 0.95,
            max_tokens: 1024,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.temperature < 0.0 {
            return Err(ModelError::Invalid("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ModelError::Invalid("top_p must be in (0, 1]".into()));
        }
        if self.max_tokens == 0 {
            return Err(ModelError::Invalid("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// One expert backend: the endpoint serving the fine-tuned weights for a
/// complexity tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub expert_id: String,
    pub category: ComplexityCategory,
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub sampling: SamplingParams,
}

/// A validated registry: exactly one expert per complexity tier.
#[derive(Debug, Clone)]
pub struct ExpertRegistry {
    by_category: BTreeMap<ComplexityCategory, ExpertSpec>,
}

impl ExpertRegistry {
    pub fn expert_for(&self, category: ComplexityCategory) -> &ExpertSpec {
        // exact four-way cover is guaranteed by validate_registry
        &self.by_category[&category]
    }

    pub fn experts(&self) -> impl Iterator<Item = &ExpertSpec> {
        self.by_category.values()
    }

    /// Stable digest of the registry configuration, recorded in run
    /// parameters so persisted runs are self-describing.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for spec in self.by_category.values() {
            hasher.update(serde_json::to_vec(spec).expect("expert spec serializes"));
        }
        hex_digest(&hasher.finalize())
    }
}

/// Checks that `specs` covers all four categories exactly once and that
/// every endpoint is a syntactically valid URL.
pub fn validate_registry(specs: &[ExpertSpec]) -> Result<ExpertRegistry, ModelError> {
    if specs.is_empty() {
        return Err(ModelError::Invalid("registry must not be empty".into()));
    }
    let mut by_category = BTreeMap::new();
    for spec in specs {
        spec.sampling.validate()?;
        if Url::parse(&spec.endpoint).is_err() {
            return Err(ModelError::MalformedEndpoint {
                expert_id: spec.expert_id.clone(),
                endpoint: spec.endpoint.clone(),
            });
        }
        if by_category.insert(spec.category, spec.clone()).is_some() {
            return Err(ModelError::DuplicateCategory(spec.category));
        }
    }
    for tier in ComplexityCategory::ALL {
        if !by_category.contains_key(&tier) {
            return Err(ModelError::MissingCategory(tier));
        }
    }
    Ok(ExpertRegistry { by_category })
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("registry is missing an expert for category {0}")]
    MissingCategory(ComplexityCategory),
    #[error("registry has more than one expert for category {0}")]
    DuplicateCategory(ComplexityCategory),
    #[error("expert '{expert_id}' has a malformed endpoint: {endpoint}")]
    MalformedEndpoint { expert_id: String, endpoint: String },
    #[error("duplicate problem id '{0}'")]
    DuplicateProblemId(String),
    #[error("{0}")]
    Invalid(String),
}
