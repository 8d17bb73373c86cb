//! Stage-1 complexity classification plus stage-2 expert selection and
//! generation dispatch.
//!
//! Two classifiers are available: a transparent keyword heuristic derived
//! from the tier definitions, and a model-backed classifier that queries a
//! served endpoint and falls back to the heuristic when the response is
//! unusable. Routing itself is a pure lookup from category to the
//! registry's expert.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::model::{
    ComplexityCategory, ExpertRegistry, GenerationSample, Problem,
};

/// How the category in a routing decision was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierKind {
    Heuristic,
    ModelBacked,
    Forced,
}

/// Classifier selection for a run.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierConfig {
    Heuristic,
    Model { endpoint: String },
    /// One category forced for every problem.
    Forced(ComplexityCategory),
    /// Each problem forced to the category its suite metadata declares.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub problem_id: String,
    pub category: ComplexityCategory,
    pub classifier_kind: ClassifierKind,
    pub expert_id: String,
    pub confidence_note: String,
}

/// Keyword groups per tier. Single words match whole words of the
/// description; multi-word keywords match as contiguous phrases. Expert
/// has no keywords of its own: it is assigned when groups from two or
/// more distinct tiers match.
const TIER_KEYWORDS: [(ComplexityCategory, &[&str]); 3] = [
    (
        ComplexityCategory::Basic,
        &["wire", "gate", "and", "or", "not", "xor", "buffer", "inverter"],
    ),
    (
        ComplexityCategory::Intermediate,
        &[
            "mux",
            "multiplexer",
            "adder",
            "subtractor",
            "comparator",
            "decoder",
            "encoder",
            "alu",
            "arithmetic",
        ],
    ),
    (
        ComplexityCategory::Advanced,
        &[
            "fsm",
            "finite state machine",
            "counter",
            "register",
            "flip-flop",
            "sequential",
            "clock",
        ],
    ),
];

fn words_of(text: &str) -> Vec<String> {
    text.to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn keyword_matches(words: &[String], keyword: &str) -> bool {
    let kw = words_of(keyword);
    if kw.is_empty() {
        return false;
    }
    words.windows(kw.len()).any(|w| w == kw.as_slice())
}

/// Deterministic, total keyword classifier.
///
/// Exactly one category comes back for any non-empty description: the
/// single matching tier; `Expert` when two or more tiers match; `Basic`
/// when nothing matches (flagged in the note).
pub fn classify_heuristic(description: &str) -> Result<(ComplexityCategory, String), RouterError> {
    if description.trim().is_empty() {
        return Err(RouterError::EmptyDescription);
    }
    let words = words_of(description);
    let mut matched: BTreeSet<ComplexityCategory> = BTreeSet::new();
    let mut hits: Vec<String> = Vec::new();
    for (tier, keywords) in TIER_KEYWORDS {
        for kw in keywords {
            if keyword_matches(&words, kw) {
                matched.insert(tier);
                hits.push(format!("{kw} ({tier})"));
            }
        }
    }
    Ok(match matched.len() {
        0 => (
            ComplexityCategory::Basic,
            "no keyword matched; defaulted to Basic".to_string(),
        ),
        1 => {
            let tier = *matched.iter().next().expect("one tier");
            (tier, format!("matched: {}", hits.join(", ")))
        }
        _ => (
            ComplexityCategory::Expert,
            format!(
                "composite design: keywords from {} tiers ({})",
                matched.len(),
                hits.join(", ")
            ),
        ),
    })
}

/// Preamble for the model-backed classifier: the four tier definitions
/// plus the single-word answer instruction.
pub fn classifier_preamble() -> String {
    crate::dataset::categorize_preamble()
}

/// Outcome of a classification attempt, recording which path produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub category: ComplexityCategory,
    pub kind: ClassifierKind,
    pub note: String,
}

/// Queries the classifier backend; falls back to the keyword heuristic on
/// unusable responses or backend failure. Never fatal: the heuristic is
/// total, so a category always comes back, with the path recorded.
pub fn classify_model(
    description: &str,
    gateway: &Gateway,
    endpoint: &str,
) -> Result<Classification, RouterError> {
    if description.trim().is_empty() {
        return Err(RouterError::EmptyDescription);
    }
    let preamble = classifier_preamble();
    let mut failure = None;
    for _attempt in 0..2 {
        match gateway.label_query(endpoint, &preamble, description) {
            Ok(response) => {
                if let Some(category) = crate::dataset::parse_category_response(&response) {
                    return Ok(Classification {
                        category,
                        kind: ClassifierKind::ModelBacked,
                        note: format!("classifier answered '{}'", response.trim()),
                    });
                }
                failure = Some(format!("unparsable classifier response '{}'", response.trim()));
            }
            Err(e) => {
                failure = Some(format!("classifier backend failed: {e}"));
            }
        }
    }
    let (category, note) = classify_heuristic(description)?;
    Ok(Classification {
        category,
        kind: ClassifierKind::Heuristic,
        note: format!(
            "{}; fell back to heuristic: {note}",
            failure.unwrap_or_else(|| "classifier unavailable".into())
        ),
    })
}

/// Produces the routing decision for a problem: classify (or honor a
/// forced category) and select the registry's expert for the category.
pub fn route(
    problem: &Problem,
    registry: &ExpertRegistry,
    gateway: &Gateway,
    classifier: &ClassifierConfig,
) -> Result<RoutingDecision, RouterError> {
    let classification = match classifier {
        ClassifierConfig::Forced(category) => Classification {
            category: *category,
            kind: ClassifierKind::Forced,
            note: "category forced by configuration".to_string(),
        },
        ClassifierConfig::GroundTruth => {
            let category = problem
                .category
                .ok_or_else(|| RouterError::NoGroundTruth(problem.id.clone()))?;
            Classification {
                category,
                kind: ClassifierKind::Forced,
                note: "category forced from suite metadata".to_string(),
            }
        }
        ClassifierConfig::Heuristic => {
            let (category, note) = classify_heuristic(&problem.prompt)?;
            Classification {
                category,
                kind: ClassifierKind::Heuristic,
                note,
            }
        }
        ClassifierConfig::Model { endpoint } => {
            classify_model(&problem.prompt, gateway, endpoint)?
        }
    };
    let expert = registry.expert_for(classification.category);
    Ok(RoutingDecision {
        problem_id: problem.id.clone(),
        category: classification.category,
        classifier_kind: classification.kind,
        expert_id: expert.expert_id.clone(),
        confidence_note: classification.note,
    })
}

/// The fixed preliminary section prepended to every problem prompt, so
/// every expert and baseline under comparison sees a byte-identical
/// request for the same problem.
pub fn generation_prompt(problem: &Problem) -> String {
    format!(
        "Write Verilog code that implements the following design description.\n\n{}",
        problem.prompt
    )
}

/// Requests `n` completions from the decision's expert and wraps them as
/// indexed samples. One batched request is attempted first; backends that
/// cannot honor `n` completions per request are driven by `n` sequential
/// single-completion requests with per-index seeds.
pub fn generate(
    problem: &Problem,
    decision: &RoutingDecision,
    registry: &ExpertRegistry,
    gateway: &Gateway,
    n: u32,
    seed: u64,
) -> Result<Vec<GenerationSample>, RouterError> {
    if n < 1 {
        return Err(RouterError::Generate {
            problem_id: problem.id.clone(),
            source: GatewayError::InvalidRequest("n must be >= 1".into()),
        });
    }
    let expert = registry.expert_for(decision.category);
    debug_assert_eq!(expert.expert_id, decision.expert_id);
    let prompt = generation_prompt(problem);
    let request = crate::gateway::CompletionRequest {
        model_name: expert.model_name.clone(),
        prompt: prompt.clone(),
        n,
        sampling: expert.sampling.clone(),
        seed: Some(seed),
    };
    let wrap = |source: GatewayError| RouterError::Generate {
        problem_id: problem.id.clone(),
        source,
    };

    let (texts, latency_ms) = match gateway.complete(&expert.endpoint, &request) {
        Ok(result) => (result.texts, result.backend_latency.as_millis() as u64),
        Err(GatewayError::MalformedResponse(_)) if n > 1 => {
            // batch unsupported: fall back to sequential single completions
            let mut texts = Vec::with_capacity(n as usize);
            let mut total_ms = 0u64;
            for i in 0..n {
                let single = crate::gateway::CompletionRequest {
                    n: 1,
                    seed: Some(seed.wrapping_add(u64::from(i))),
                    ..request.clone()
                };
                let result = gateway.complete(&expert.endpoint, &single).map_err(wrap)?;
                total_ms += result.backend_latency.as_millis() as u64;
                texts.extend(result.texts);
            }
            (texts, total_ms)
        }
        Err(e) => return Err(wrap(e)),
    };

    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, code)| GenerationSample {
            problem_id: problem.id.clone(),
            sample_index: i as u32,
            expert_id: decision.expert_id.clone(),
            category: decision.category,
            code,
            latency_ms,
        })
        .collect())
}

/// Appends one decision to a JSONL audit log.
pub fn append_audit(path: &Path, decision: &RoutingDecision) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct AuditLine<'a> {
        problem_id: &'a str,
        category: ComplexityCategory,
        classifier_kind: ClassifierKind,
        expert_id: &'a str,
        timestamp_epoch_secs: u64,
    }
    let line = AuditLine {
        problem_id: &decision.problem_id,
        category: decision.category,
        classifier_kind: decision.classifier_kind,
        expert_id: &decision.expert_id,
        timestamp_epoch_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    writeln!(file, "{}", serde_json::to_string(&line).expect("audit line serializes"))
}

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("description is empty")]
    EmptyDescription,
    #[error("problem '{0}' declares no ground-truth category")]
    NoGroundTruth(String),
    #[error("generation failed for problem '{problem_id}': {source}")]
    Generate {
        problem_id: String,
        source: GatewayError,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GatewayConfig;
    use crate::model::{validate_registry, ExpertSpec, SamplingParams, Suite};

    fn heuristic(description: &str) -> ComplexityCategory {
        classify_heuristic(description).unwrap().0
    }

    #[test]
    fn tier_exemplars_classify_to_their_tier() {
        assert_eq!(heuristic("wire two inputs to an AND gate"), ComplexityCategory::Basic);
        assert_eq!(heuristic("4-to-1 multiplexer with enable"), ComplexityCategory::Intermediate);
        assert_eq!(
            heuristic("Moore finite state machine detecting 101"),
            ComplexityCategory::Advanced
        );
        assert_eq!(heuristic("ALU with an FSM controller"), ComplexityCategory::Expert);
        assert_eq!(heuristic("ripple carry adder"), ComplexityCategory::Intermediate);
    }

    #[test]
    fn multiple_keywords_in_one_tier_stay_in_tier() {
        assert_eq!(
            heuristic("traffic light FSM with counter"),
            ComplexityCategory::Advanced
        );
        assert_eq!(
            heuristic("sequential circuit driven by a clock"),
            ComplexityCategory::Advanced
        );
    }

    #[test]
    fn no_match_defaults_to_basic_with_note() {
        let (cat, note) = classify_heuristic("a mystery design").unwrap();
        assert_eq!(cat, ComplexityCategory::Basic);
        assert!(note.contains("no keyword"));
    }

    #[test]
    fn word_boundaries_respected() {
        // "operand" must not match the Basic keyword "and"
        assert_eq!(heuristic("comparator of two operands"), ComplexityCategory::Intermediate);
        // "Moore" must not match "or"
        assert_eq!(
            heuristic("moore finite state machine"),
            ComplexityCategory::Advanced
        );
    }

    #[test]
    fn empty_description_is_an_error() {
        assert!(matches!(
            classify_heuristic("  "),
            Err(RouterError::EmptyDescription)
        ));
    }

    #[test]
    fn heuristic_is_pure() {
        let inputs = ["an adder", "a counter", "an and gate", "alu with fsm"];
        let first: Vec<_> = inputs.iter().map(|d| heuristic(d)).collect();
        // same answers regardless of evaluation order
        let mut reversed: Vec<_> = inputs.iter().rev().map(|d| heuristic(d)).collect();
        reversed.reverse();
        assert_eq!(first, reversed);
    }

    fn test_registry() -> ExpertRegistry {
        let specs: Vec<ExpertSpec> = ComplexityCategory::ALL
            .iter()
            .map(|&c| ExpertSpec {
                expert_id: format!("expert-{}", c.name().to_ascii_lowercase()),
                category: c,
                endpoint: "mock://echo".to_string(),
                model_name: "mock".to_string(),
                sampling: SamplingParams::default(),
            })
            .collect();
        validate_registry(&specs).unwrap()
    }

    fn problem(id: &str, prompt: &str) -> Problem {
        Problem {
            id: id.into(),
            suite: Suite::Human,
            prompt: prompt.into(),
            testbench: "module tb; endmodule".into(),
            reference_solution: None,
            category: None,
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
    fn route_selects_registry_expert() {
        let registry = test_registry();
        let gw = fast_gateway();
        let p = problem("fsm-1", "Moore finite state machine detecting 101");
        let decision = route(&p, &registry, &gw, &ClassifierConfig::Heuristic).unwrap();
        assert_eq!(decision.category, ComplexityCategory::Advanced);
        assert_eq!(decision.expert_id, "expert-advanced");
        assert_eq!(decision.classifier_kind, ClassifierKind::Heuristic);
        // determinism
        let again = route(&p, &registry, &gw, &ClassifierConfig::Heuristic).unwrap();
        assert_eq!(decision, again);
    }

    #[test]
    fn forced_category_overrides_text() {
        let registry = test_registry();
        let gw = fast_gateway();
        let p = problem("fsm-1", "Moore finite state machine detecting 101");
        let decision = route(
            &p,
            &registry,
            &gw,
            &ClassifierConfig::Forced(ComplexityCategory::Basic),
        )
        .unwrap();
        assert_eq!(decision.category, ComplexityCategory::Basic);
        assert_eq!(decision.classifier_kind, ClassifierKind::Forced);
        assert_eq!(decision.expert_id, "expert-basic");
    }

    #[test]
    fn model_classifier_falls_back_to_heuristic() {
        let gw = fast_gateway();
        // unreachable classifier endpoint: falls back, never fatal
        let out = classify_model("full adder", &gw, "http://127.0.0.1:1/v1/completions").unwrap();
        assert_eq!(out.category, ComplexityCategory::Intermediate);
        assert_eq!(out.kind, ClassifierKind::Heuristic);
        assert!(out.note.contains("fell back"));
    }

    #[test]
    fn model_classifier_parses_tier_answer() {
        let gw = fast_gateway();
        // the labeler mock categorizes fsm content as Advanced
        let out = classify_model("design with fsm control", &gw, "mock://labeler").unwrap();
        assert_eq!(out.category, ComplexityCategory::Advanced);
        assert_eq!(out.kind, ClassifierKind::ModelBacked);
    }

    #[test]
    fn generate_returns_contiguous_indexed_samples() {
        let registry = test_registry();
        let gw = fast_gateway();
        let p = problem("p1", "an and gate");
        let decision = route(&p, &registry, &gw, &ClassifierConfig::Heuristic).unwrap();
        let samples = generate(&p, &decision, &registry, &gw, 15, 42).unwrap();
        assert_eq!(samples.len(), 15);
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(s.sample_index, i as u32);
            assert_eq!(s.expert_id, decision.expert_id);
            assert_eq!(s.category, decision.category);
        }
        // echo texts are unique per index
        let unique: std::collections::HashSet<_> = samples.iter().map(|s| &s.code).collect();
        assert_eq!(unique.len(), 15);
    }

    #[test]
    fn generate_falls_back_to_sequential_requests() {
        // scripted fixture with a single response cannot honor n = 3 in
        // one request; generate retries as sequential single completions
        let dir = tempfile::tempdir().unwrap();
        let fixture = dir.path().join("one.jsonl");
        let p = problem("p1", "an and gate");
        let prompt = generation_prompt(&p);
        let line = serde_json::json!({
            "prompt_sha256": crate::gateway::sha256_hex(&prompt),
            "responses": ["module only; endmodule"],
        });
        std::fs::write(&fixture, format!("{line}\n")).unwrap();
        let endpoint = format!("mock://scripted{}", fixture.display());
        let specs: Vec<ExpertSpec> = ComplexityCategory::ALL
            .iter()
            .map(|&c| ExpertSpec {
                expert_id: format!("s-{c}"),
                category: c,
                endpoint: endpoint.clone(),
                model_name: "s".to_string(),
                sampling: SamplingParams::default(),
            })
            .collect();
        let registry = validate_registry(&specs).unwrap();
        let gw = fast_gateway();
        let decision = route(&p, &registry, &gw, &ClassifierConfig::Heuristic).unwrap();
        let samples = generate(&p, &decision, &registry, &gw, 3, 9).unwrap();
        assert_eq!(samples.len(), 3);
        assert!(samples.iter().all(|s| s.code == "module only; endmodule"));
        assert_eq!(
            samples.iter().map(|s| s.sample_index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn generate_single_sample() {
        let registry = test_registry();
        let gw = fast_gateway();
        let p = problem("p1", "an and gate");
        let decision = route(&p, &registry, &gw, &ClassifierConfig::Heuristic).unwrap();
        let samples = generate(&p, &decision, &registry, &gw, 1, 0).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].sample_index, 0);
    }

    #[test]
    fn audit_log_appends_jsonl(){
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let decision = RoutingDecision {
            problem_id: "p".into(),
            category: ComplexityCategory::Basic,
            classifier_kind: ClassifierKind::Heuristic,
            expert_id: "expert-basic".into(),
            confidence_note: String::new(),
        };
        append_audit(&path, &decision).unwrap();
        append_audit(&path, &decision).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["problem_id"], "p");
        assert_eq!(v["classifier_kind"], "Heuristic");
    }
}
