//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural shape mismatch. These indicate programming bugs or corrupt
    /// checkpoints, not data conditions.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dim {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("zero-variance channel `{0}` cannot be normalized")]
    ZeroVariance(String),

    #[error("channel schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("merge error: {0}")]
    Merge(String),

    #[error("prune rejected: scoring-corpus MSE ratio {ratio:.6} exceeds limit {limit:.6}")]
    PruneRejected { ratio: f64, limit: f64 },

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("manifest verification failed: {0}")]
    Verify(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dim {
            context: context.into(),
            expected,
            got,
        }
    }

    /// Coarse category used by the CLI to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidParams(_) => ErrorCategory::Config,
            Error::Divergence(_) => ErrorCategory::Divergence,
            Error::PruneRejected { .. } | Error::Verify(_) => ErrorCategory::InvariantRejection,
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Divergence,
    InvariantRejection,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Divergence => 4,
            ErrorCategory::InvariantRejection => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
