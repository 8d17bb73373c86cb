//! Application configuration: one TOML-or-JSON file, every field
//! optional with defaults matching the reference setup (token limit
//! 4096, 15 samples per problem, pass@{1,5,10}).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mev_core::gateway::GatewayConfig;
use mev_core::metrics::PassKParams;
use mev_core::model::{validate_registry, ExpertRegistry, ExpertSpec};
use mev_core::verify::SimulatorConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub experts: Vec<ExpertSpec>,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub labeler: LabelerSection,
    #[serde(default)]
    pub simulator: Option<SimulatorSection>,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub token_limit: u64,
    pub token_divisor: u32,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub rate_limit_rps: f64,
    pub max_in_flight: usize,
    pub request_timeout_ms: u64,
    pub api_key_env: String,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let g = GatewayConfig::default();
        GatewaySection {
            token_limit: g.token_limit,
            token_divisor: g.token_divisor,
            max_retries: g.max_retries,
            backoff_base_ms: g.backoff_base_ms,
            rate_limit_rps: g.rate_limit_rps,
            max_in_flight: g.max_in_flight,
            request_timeout_ms: g.request_timeout_ms,
            api_key_env: g.api_key_env,
        }
    }
}

impl GatewaySection {
    pub fn to_gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            token_limit: self.token_limit,
            token_divisor: self.token_divisor,
            max_retries: self.max_retries,
            backoff_base_ms: self.backoff_base_ms,
            rate_limit_rps: self.rate_limit_rps,
            max_in_flight: self.max_in_flight,
            request_timeout_ms: self.request_timeout_ms,
            api_key_env: self.api_key_env.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    /// "heuristic" or "model"
    pub kind: String,
    pub endpoint: Option<String>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            kind: "heuristic".to_string(),
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerSection {
    pub endpoint: String,
    pub max_fail_fraction: f64,
}

impl Default for LabelerSection {
    fn default() -> Self {
        LabelerSection {
            endpoint: "mock://labeler".to_string(),
            max_fail_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorSection {
    pub compile_cmd: String,
    pub run_cmd: String,
    pub pass_marker: String,
    pub compile_timeout_ms: u64,
    pub run_timeout_ms: u64,
    pub workdir_root: Option<PathBuf>,
    pub keep_artifacts: bool,
}

impl Default for SimulatorSection {
    fn default() -> Self {
        let s = SimulatorConfig::default();
        SimulatorSection {
            compile_cmd: s.compile_cmd,
            run_cmd: s.run_cmd,
            pass_marker: s.pass_marker,
            compile_timeout_ms: s.compile_timeout_ms,
            run_timeout_ms: s.run_timeout_ms,
            workdir_root: None,
            keep_artifacts: false,
        }
    }
}

impl SimulatorSection {
    pub fn to_simulator_config(&self) -> SimulatorConfig {
        SimulatorConfig {
            compile_cmd: self.compile_cmd.clone(),
            run_cmd: self.run_cmd.clone(),
            pass_marker: self.pass_marker.clone(),
            compile_timeout_ms: self.compile_timeout_ms,
            run_timeout_ms: self.run_timeout_ms,
            workdir_root: self
                .workdir_root
                .clone()
                .unwrap_or_else(|| std::env::temp_dir().join("mev-verify")),
            keep_artifacts: self.keep_artifacts,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<u32>,
    pub n: u32,
    pub problem_parallelism: usize,
    pub verify_parallelism: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ks: vec![1, 5, 10],
            n: 15,
            problem_parallelism: 2,
            verify_parallelism: 4,
        }
    }
}

impl EvalSection {
    pub fn to_params(&self) -> PassKParams {
        PassKParams {
            ks: self.ks.clone(),
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub runs_root: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            runs_root: PathBuf::from("runs"),
        }
    }
}

impl AppConfig {
    /// Loads from `path` (TOML unless the extension is .json). A `None`
    /// path falls back to `mev.toml` when present, else pure defaults.
    pub fn load(path: Option<&Path>) -> Result<AppConfig, CliError> {
        let (path, required) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from("mev.toml"), false),
        };
        if !path.exists() {
            if required {
                return Err(CliError::Config(format!(
                    "config file not found: {}",
                    path.display()
                )));
            }
            return Ok(AppConfig::default());
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: AppConfig = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(config)
    }

    /// Validates and returns the configured registry.
    pub fn registry(&self) -> Result<ExpertRegistry, CliError> {
        if self.experts.is_empty() {
            return Err(CliError::Config(
                "no experts configured: add four [[experts]] sections (one per category) \
                 or use a --mock mode"
                    .to_string(),
            ));
        }
        validate_registry(&self.experts).map_err(|e| CliError::Config(e.to_string()))
    }
}
