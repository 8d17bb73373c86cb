//! Multi-expert Verilog generation toolkit: a complexity-classified
//! routing pipeline over four expert backends, the categorized-dataset
//! construction pipeline that feeds their fine-tuning, and the pass@k
//! evaluation harness that measures the result.
//!
//! Modules map to the subsystems:
//!
//! - [`model`] — shared domain types and the expert registry
//! - [`gateway`] — completion backends (HTTP and deterministic mocks),
//!   rate limiting, retries, token estimation
//! - [`dataset`] — ingest, dedup, labeling, partitioning, corruption,
//!   JSONL export, fine-tuning manifests
//! - [`router`] — complexity classification and generation dispatch
//! - [`verify`] — compiler/simulator orchestration with timeouts
//! - [`metrics`] — unbiased pass@k estimation and result tables
//! - [`harness`] — end-to-end resumable evaluation runs

pub mod dataset;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod router;
mod util;
pub mod verify;

/// Concrete scalar for probabilities and percentages; the estimator in
/// [`metrics`] itself is generic over [`num_traits::Float`].
pub use metrics::Score;

pub use model::{
    ComplexityCategory, DatasetEntry, EvalRecord, ExpertRegistry, ExpertSpec, GenerationSample,
    PassKTable, Problem, ProblemSet, Suite, VerifyOutcome,
};
