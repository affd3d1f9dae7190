use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid model `{model}`: {message}")]
    InvalidModel { model: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("no model fits within the budget of {epsilon:.6e} FLOPs")]
    InfeasibleBudget { epsilon: f64 },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("dataset {path}:{line}: {message}")]
    Dataset { path: String, line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("embedding for query `{0}` not found")]
    MissingEmbedding(String),

    #[error("fusion impossible: {0}")]
    FusionImpossible(String),

    #[error("dispatch failed: {0}")]
    DispatchFailed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag, used in service error bodies and FFI status mapping.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidModel { .. } | Error::InvalidConfig(_) => "validation",
            Error::UnknownModel(_) => "unknown_model",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InfeasibleBudget { .. } => "infeasible_budget",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Dataset { .. } => "dataset",
            Error::Checkpoint(_) => "checkpoint",
            Error::MissingEmbedding(_) => "missing_embedding",
            Error::FusionImpossible(_) => "fusion_impossible",
            Error::DispatchFailed(_) => "dispatch_failed",
        }
    }
}
