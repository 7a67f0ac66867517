use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LandauError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LandauError {
    #[error("undefined projection: zero vector has no orthogonal complement")]
    UndefinedProjection,

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("particle count must be positive, got {0}")]
    EmptyEnsemble(usize),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("value out of range for `{key}`: {reason}")]
    OutOfRange { key: String, reason: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("BKW density undefined: K = {k} is below the nonnegativity threshold {threshold}")]
    BkwOutOfRange { k: f64, threshold: f64 },

    #[error("unsupported dimension {0} for this operation")]
    UnsupportedDimension(usize),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LandauError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LandauError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        LandauError::NonFinite {
            context: context.into(),
        }
    }
}
