use std::io;

/// Errors raised by the engine. Variants name the invariant that failed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate vector: norm {norm:e} is at or below the normalization threshold")]
    DegenerateVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("batch too small: {rows} rows, need an even count of at least 2")]
    BatchTooSmall { rows: usize },

    #[error("k = {k} out of range (must be in 1..={max})")]
    KOutOfRange { k: usize, max: usize },

    #[error("labels contain a single class; both normal and anomalous samples are required")]
    SingleClassLabels,

    #[error("parse error at {position}: {message}")]
    Parse { position: String, message: String },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("augmentation policy mismatch: {0}")]
    PolicyMismatch(String),

    #[error("non-finite value after update of {param}")]
    NonFiniteUpdate { param: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(position: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            position: position.into(),
            message: message.into(),
        }
    }
}
