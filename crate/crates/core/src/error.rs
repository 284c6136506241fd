use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the library's fallible operations.
#[derive(Error, Debug)]
pub enum Error {
    #[error("empty logits")]
    EmptyLogits,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate direction: zero vector cannot be normalized")]
    DegenerateDirection,

    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("requested {k} clusters from {points} points")]
    TooManyClusters { k: usize, points: usize },

    #[error("empty pool")]
    EmptyPool,

    #[error("unknown strategy: {0}")]
    UnknownStrategy(String),

    #[error("{path}:{line}: {message}")]
    DatasetParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
