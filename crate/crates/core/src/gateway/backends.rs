//! Backend resolution: remote HTTP completion endpoints and the
//! in-process deterministic mocks.
//!
//! Endpoint URLs select the backend:
//!
//! - `http://...` / `https://...` — completions-style HTTP POST
//! - `mock://echo[?delay_ms=N]` — prompt-derived deterministic text
//! - `mock://scripted/<path>` — replay from a JSONL fixture keyed by
//!   prompt hash
//! - `mock://oracle/<category>` — reference solution iff the routed
//!   category matches, else a syntactically broken stub
//! - `mock://labeler` — keyword-driven canned descriptions and tier
//!   names, for running the dataset pipeline without a live backend

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use super::GatewayError;
use crate::model::{hex_digest, ComplexityCategory};

#[derive(Debug, Clone, PartialEq)]
pub enum BackendKind {
    Http { url: String },
    Echo { delay: Duration },
    Scripted { path: PathBuf },
    Oracle { category: ComplexityCategory },
    Labeler,
}

pub fn parse_endpoint(endpoint: &str) -> Result<BackendKind, GatewayError> {
    let url = Url::parse(endpoint).map_err(|e| {
        GatewayError::MalformedEndpoint(format!("'{endpoint}': {e}"))
    })?;
    match url.scheme() {
        "http" | "https" => Ok(BackendKind::Http {
            url: endpoint.to_string(),
        }),
        "mock" => {
            let kind = url.host_str().unwrap_or_default();
            match kind {
                "echo" => {
                    let delay_ms = url
                        .query_pairs()
                        .find(|(k, _)| k == "delay_ms")
                        .and_then(|(_, v)| v.parse::<u64>().ok())
                        .unwrap_or(0);
                    Ok(BackendKind::Echo {
                        delay: Duration::from_millis(delay_ms),
                    })
                }
                "scripted" => {
                    let path = url.path().trim_start_matches('/');
                    if path.is_empty() {
                        return Err(GatewayError::MalformedEndpoint(
                            "mock://scripted requires a fixture path".into(),
                        ));
                    }
                    Ok(BackendKind::Scripted {
                        path: PathBuf::from(format!("/{path}")),
                    })
                }
                "oracle" => {
                    let tier = url.path().trim_start_matches('/');
                    let category = ComplexityCategory::parse_name(tier).ok_or_else(|| {
                        GatewayError::MalformedEndpoint(format!(
                            "mock://oracle requires a tier name, got '{tier}'"
                        ))
                    })?;
                    Ok(BackendKind::Oracle { category })
                }
                "labeler" => Ok(BackendKind::Labeler),
                other => Err(GatewayError::MalformedEndpoint(format!(
                    "unknown mock backend '{other}'"
                ))),
            }
        }
        other => Err(GatewayError::MalformedEndpoint(format!(
            "unsupported endpoint scheme '{other}'"
        ))),
    }
}

pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_digest(&hasher.finalize())
}

/// Deterministic echo completion: a pure function of (prompt, seed, index),
/// stable across processes.
pub fn echo_text(prompt: &str, seed: Option<u64>, index: u32) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.update(seed.unwrap_or(0).to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hex_digest(&hasher.finalize());
    format!("echo-{}-{}", index, &digest[..16])
}

/// The code every oracle expert returns when it is the wrong expert for
/// the problem: fails the precheck (unbalanced module/endmodule and
/// parentheses), so it can never pass verification.
pub const BROKEN_STUB: &str = "module broken_stub(\n  // wrong expert for this problem\n";

/// Ground-truth data the oracle mocks consult: for each known problem,
/// its prompt text, true category, and reference solution.
#[derive(Debug, Clone, Default)]
pub struct OracleTable {
    entries: Vec<OracleEntry>,
}

#[derive(Debug, Clone)]
pub struct OracleEntry {
    pub prompt: String,
    pub category: ComplexityCategory,
    pub reference: String,
}

impl OracleTable {
    pub fn new(entries: Vec<OracleEntry>) -> Self {
        OracleTable { entries }
    }

    /// Finds the problem whose prompt text appears in the full generation
    /// prompt sent to the backend.
    pub fn match_prompt(&self, full_prompt: &str) -> Option<&OracleEntry> {
        self.entries
            .iter()
            .find(|e| !e.prompt.is_empty() && full_prompt.contains(&e.prompt))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One line of a scripted-mock fixture file.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScriptedFixtureLine {
    pub prompt_sha256: String,
    pub responses: Vec<String>,
}

/// Lazily-loaded scripted fixtures, cached per path.
#[derive(Default)]
pub struct ScriptedCache {
    loaded: Mutex<HashMap<PathBuf, HashMap<String, Vec<String>>>>,
}

impl ScriptedCache {
    pub fn responses_for(
        &self,
        path: &PathBuf,
        prompt: &str,
    ) -> Result<Vec<String>, GatewayError> {
        let mut loaded = self.loaded.lock().expect("scripted cache lock");
        if !loaded.contains_key(path) {
            let text = std::fs::read_to_string(path).map_err(|e| {
                GatewayError::MalformedResponse(format!(
                    "cannot read scripted fixture {}: {e}",
                    path.display()
                ))
            })?;
            let mut map = HashMap::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: ScriptedFixtureLine = serde_json::from_str(line).map_err(|e| {
                    GatewayError::MalformedResponse(format!(
                        "scripted fixture {} line {}: {e}",
                        path.display(),
                        i + 1
                    ))
                })?;
                map.insert(parsed.prompt_sha256, parsed.responses);
            }
            loaded.insert(path.clone(), map);
        }
        let map = &loaded[path];
        let key = sha256_hex(prompt);
        map.get(&key).cloned().ok_or_else(|| {
            GatewayError::MalformedResponse(format!(
                "scripted fixture has no entry for prompt hash {key}"
            ))
        })
    }
}

/// Keyword-driven canned labeler. When the preamble asks for a category
/// (it embeds the tier definitions), answers with a tier name; otherwise
/// produces a one-line description of the code.
pub fn labeler_response(system_preamble: &str, content: &str) -> String {
    let lower = content.to_ascii_lowercase();
    let wants_category = system_preamble.contains("Basic")
        && system_preamble.contains("Expert")
        && system_preamble.to_ascii_lowercase().contains("categor");
    let mentions: &[(&str, &str, ComplexityCategory)] = &[
        ("fsm", "a finite state machine", ComplexityCategory::Advanced),
        ("always @(posedge", "a sequential circuit", ComplexityCategory::Advanced),
        ("counter", "a counter", ComplexityCategory::Advanced),
        ("alu", "an arithmetic logic unit", ComplexityCategory::Intermediate),
        ("adder", "an adder", ComplexityCategory::Intermediate),
        ("mux", "a multiplexer", ComplexityCategory::Intermediate),
        ("assign", "simple combinational wiring", ComplexityCategory::Basic),
    ];
    let hit = mentions.iter().find(|(token, _, _)| lower.contains(token));
    match (wants_category, hit) {
        (true, Some((_, _, category))) => category.name().to_string(),
        (true, None) => ComplexityCategory::Basic.name().to_string(),
        (false, Some((_, phrase, _))) => {
            format!("A Verilog module implementing {phrase}.")
        }
        (false, None) => "A Verilog module.".to_string(),
    }
}

// ---- HTTP wire types (completions-style protocol) ----

#[derive(Debug, Serialize)]
pub struct HttpCompletionBody<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub n: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct HttpCompletionResponse {
    pub choices: Vec<HttpChoice>,
}

#[derive(Debug, Deserialize)]
pub struct HttpChoice {
    pub text: String,
}
