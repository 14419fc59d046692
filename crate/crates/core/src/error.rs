use std::path::PathBuf;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("no cached activations: call forward_cached before backward")]
    MissingCache,

    #[error("non-finite gradient; optimizer step skipped")]
    NonFiniteGradient,

    #[error("matrix is singular within pivot tolerance (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("invalid range for {name}: {reason}")]
    InvalidRange { name: &'static str, reason: String },

    #[error("invalid n-step horizon {0}; must be >= 1")]
    InvalidHorizon(usize),

    #[error("invalid batch split: {0}")]
    InvalidSplit(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("soft policy iteration did not converge after {iterations} iterations (last gap {last_gap:e})")]
    NoConvergence {
        iterations: usize,
        last_gap: f64,
        gap_history: Vec<f64>,
    },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
