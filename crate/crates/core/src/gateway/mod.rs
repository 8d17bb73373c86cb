//! Uniform client for text-generation backends: remote HTTP completion
//! endpoints and in-process deterministic mocks, with retries, rate
//! limiting, token estimation, and a bounded in-flight request count.

mod backends;
mod limiter;

pub use backends::{
    echo_text, labeler_response, parse_endpoint, sha256_hex, BackendKind, OracleEntry,
    OracleTable, ScriptedFixtureLine, BROKEN_STUB,
};
pub use limiter::{backoff_delay, InFlightGauge, TokenBucket};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SamplingParams;
use backends::{HttpCompletionBody, HttpCompletionResponse, ScriptedCache};

/// Estimated prompt tokens: `ceil(character_count / divisor)`.
///
/// Deterministic and monotone under concatenation; the default divisor
/// of 4 approximates common code tokenizers well enough to enforce a
/// prompt budget without shipping one.
pub fn token_estimate_with(text: &str, divisor: u32) -> u64 {
    let divisor = u64::from(divisor.max(1));
    let chars = text.chars().count() as u64;
    chars.div_ceil(divisor)
}

/// Token estimate under the default chars/4 rule.
pub fn token_estimate(text: &str) -> u64 {
    token_estimate_with(text, 4)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    /// Hard prompt-token budget; requests estimated above it are rejected.
    pub token_limit: u64,
    /// Divisor for the chars/divisor token estimation rule.
    pub token_divisor: u32,
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    /// Base backoff in milliseconds; doubles per retry.
    pub backoff_base_ms: u64,
    /// Token-bucket rate in requests/second; 0 disables limiting.
    pub rate_limit_rps: f64,
    /// Maximum concurrent in-flight requests.
    pub max_in_flight: usize,
    /// Per-attempt HTTP timeout.
    pub request_timeout_ms: u64,
    /// Environment variable holding the API key for remote backends.
    /// The key itself is read at request time and never logged.
    pub api_key_env: String,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            token_limit: 4096,
            token_divisor: 4,
            max_retries: 2,
            backoff_base_ms: 250,
            rate_limit_rps: 5.0,
            max_in_flight: 8,
            request_timeout_ms: 60_000,
            api_key_env: "MEV_API_KEY".to_string(),
        }
    }
}

/// A completion request against one backend endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_name: String,
    pub prompt: String,
    pub n: u32,
    pub sampling: SamplingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub texts: Vec<String>,
    pub backend_latency: Duration,
}

/// Shareable gateway handle. All state beyond the rate limiter and the
/// in-flight bound is per-request.
pub struct Gateway {
    config: GatewayConfig,
    bucket: TokenBucket,
    gauge: InFlightGauge,
    scripted: ScriptedCache,
    oracle: OracleTable,
    http: reqwest::blocking::Client,
}

/// Counters exposed for observability and the concurrency-bound tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayStats {
    pub in_flight_now: usize,
    pub in_flight_high_water: usize,
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms.max(1)))
            .build()
            .expect("http client builds");
        Gateway {
            bucket: TokenBucket::new(config.rate_limit_rps, config.rate_limit_rps.max(1.0)),
            gauge: InFlightGauge::new(config.max_in_flight),
            scripted: ScriptedCache::default(),
            oracle: OracleTable::default(),
            http,
            config,
        }
    }

    /// Installs the ground-truth table consulted by `mock://oracle/...`
    /// endpoints.
    pub fn with_oracle_table(mut self, oracle: OracleTable) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            in_flight_now: self.gauge.current(),
            in_flight_high_water: self.gauge.high_water(),
        }
    }

    pub fn token_estimate(&self, text: &str) -> u64 {
        token_estimate_with(text, self.config.token_divisor)
    }

    /// Issues one completion request, returning exactly `req.n` texts.
    /// Transient failures are retried up to the configured count with
    /// exponential backoff.
    pub fn complete(
        &self,
        endpoint: &str,
        req: &CompletionRequest,
    ) -> Result<CompletionResult, GatewayError> {
        if req.n < 1 {
            return Err(GatewayError::InvalidRequest("n must be >= 1".into()));
        }
        if req.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt must not be empty".into()));
        }
        let estimate = self.token_estimate(&req.prompt);
        if estimate > self.config.token_limit {
            return Err(GatewayError::TokenLimitExceeded {
                estimate,
                limit: self.config.token_limit,
            });
        }
        let kind = parse_endpoint(endpoint)?;

        let attempts = self.config.max_retries + 1;
        let mut last_err = None;
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(backoff_delay(self.config.backoff_base_ms, attempt - 1));
            }
            self.bucket.acquire();
            let _guard = self.gauge.acquire();
            let start = Instant::now();
            match self.dispatch(&kind, req) {
                Ok(mut texts) => {
                    if texts.len() != req.n as usize {
                        // scripted fixtures may carry more responses than asked
                        if texts.len() > req.n as usize {
                            texts.truncate(req.n as usize);
                        } else {
                            return Err(GatewayError::MalformedResponse(format!(
                                "backend returned {} texts for n = {}",
                                texts.len(),
                                req.n
                            )));
                        }
                    }
                    return Ok(CompletionResult {
                        texts,
                        backend_latency: start.elapsed(),
                    });
                }
                Err(e) if e.is_transient() && attempt < attempts => {
                    last_err = Some(e);
                }
                Err(e) => {
                    return Err(match e {
                        GatewayError::Transport(detail) => GatewayError::BackendUnreachable {
                            attempts,
                            detail,
                        },
                        other => other,
                    })
                }
            }
        }
        let detail = match last_err {
            Some(GatewayError::Transport(d)) => d,
            Some(other) => other.to_string(),
            None => "unknown".into(),
        };
        Err(GatewayError::BackendUnreachable { attempts, detail })
    }

    /// Single-response query with a system preamble, used by both
    /// labeling passes and the model-backed classifier.
    pub fn label_query(
        &self,
        endpoint: &str,
        system_preamble: &str,
        content: &str,
    ) -> Result<String, GatewayError> {
        if content.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("content must not be empty".into()));
        }
        let combined = self.token_estimate(system_preamble) + self.token_estimate(content);
        if combined > self.config.token_limit {
            return Err(GatewayError::TokenLimitExceeded {
                estimate: combined,
                limit: self.config.token_limit,
            });
        }
        let kind = parse_endpoint(endpoint)?;
        // the labeler mock sees preamble and content separately; every
        // other backend gets the concatenated prompt
        if let BackendKind::Labeler = kind {
            return Ok(labeler_response(system_preamble, content));
        }
        let req = CompletionRequest {
            model_name: "labeler".to_string(),
            prompt: format!("{system_preamble}\n\n{content}"),
            n: 1,
            sampling: SamplingParams {
                temperature: 0.0,
                top_p: 1.0,
                max_tokens: 256,
            },
            seed: None,
        };
        let result = self.complete(endpoint, &req)?;
        Ok(result.texts.into_iter().next().expect("n = 1 text"))
    }

    fn dispatch(
        &self,
        kind: &BackendKind,
        req: &CompletionRequest,
    ) -> Result<Vec<String>, GatewayError> {
        match kind {
            BackendKind::Echo { delay } => {
                if !delay.is_zero() {
                    std::thread::sleep(*delay);
                }
                Ok((0..req.n)
                    .map(|i| echo_text(&req.prompt, req.seed, i))
                    .collect())
            }
            BackendKind::Scripted { path } => {
                let responses = self.scripted.responses_for(path, &req.prompt)?;
                if responses.len() < req.n as usize {
                    return Err(GatewayError::MalformedResponse(format!(
                        "scripted fixture has {} responses, request needs {}",
                        responses.len(),
                        req.n
                    )));
                }
                Ok(responses)
            }
            BackendKind::Oracle { category } => {
                let text = match self.oracle.match_prompt(&req.prompt) {
                    Some(entry) if entry.category == *category => entry.reference.clone(),
                    _ => BROKEN_STUB.to_string(),
                };
                Ok(vec![text; req.n as usize])
            }
            BackendKind::Labeler => Ok(vec![
                labeler_response("", &req.prompt);
                req.n as usize
            ]),
            BackendKind::Http { url } => self.dispatch_http(url, req),
        }
    }

    fn dispatch_http(
        &self,
        url: &str,
        req: &CompletionRequest,
    ) -> Result<Vec<String>, GatewayError> {
        let body = HttpCompletionBody {
            model: &req.model_name,
            prompt: &req.prompt,
            n: req.n,
            temperature: req.sampling.temperature,
            top_p: req.sampling.top_p,
            max_tokens: req.sampling.max_tokens,
            seed: req.seed,
        };
        let mut builder = self.http.post(url).json(&body);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            if !key.is_empty() {
                builder = builder.bearer_auth(key);
            }
        }
        let response = builder
            .send()
            .map_err(|e| GatewayError::Transport(scrub(&e.to_string())))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(GatewayError::Transport(format!("server error {status}")));
        }
        if !status.is_success() {
            return Err(GatewayError::MalformedResponse(format!(
                "backend returned status {status}"
            )));
        }
        let parsed: HttpCompletionResponse = response
            .json()
            .map_err(|e| GatewayError::MalformedResponse(scrub(&e.to_string())))?;
        Ok(parsed.choices.into_iter().map(|c| c.text).collect())
    }
}

/// Drops anything that looks like a bearer token from error text so
/// secrets cannot leak through diagnostics.
fn scrub(detail: &str) -> String {
    let mut out = String::with_capacity(detail.len());
    for word in detail.split_whitespace() {
        if word.len() > 16 && word.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            out.push_str("[redacted]");
        } else {
            out.push_str(word);
        }
        out.push(' ');
    }
    out.trim_end().to_string()
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt estimated at {estimate} tokens exceeds the limit of {limit}")]
    TokenLimitExceeded { estimate: u64, limit: u64 },
    #[error("backend unreachable after {attempts} attempts: {detail}")]
    BackendUnreachable { attempts: u32, detail: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("malformed endpoint: {0}")]
    MalformedEndpoint(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
}

impl GatewayError {
    fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}
