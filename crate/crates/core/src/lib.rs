//! Budget-constrained LLM ensembles.
//!
//! For each query the pipeline predicts every model's response quality, prices
//! each model in forward-pass FLOPs, picks the subset with the highest summed
//! quality whose total cost fits a per-query budget (a 0/1 knapsack), queries
//! those models concurrently, and fuses their answers.
//!
//! Modules:
//! - [`registry`]: the ordered model set and pipeline defaults.
//! - [`costing`]: token counts and FLOPs costs.
//! - [`selector`]: score shift, cost quantization, knapsack DP.
//! - [`predictor`]: regression head, Huber loss, AdamW training, encoders.
//! - [`orchestrator`]: dispatch, fusion, HTTP service, mock backends.
//! - [`harness`]: dataset replay, budget sweeps, baselines, reports.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costing;
pub mod error;
pub mod harness;
pub mod orchestrator;
pub mod predictor;
pub mod registry;
pub mod selector;

pub use error::{Error, Result};
pub use registry::{load_registry, ModelSpec, PipelineConfig, Registry};
pub use selector::{select, Candidate, SelectionResult};
