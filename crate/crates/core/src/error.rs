use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("too few points: have {have}, need at least {need}")]
    TooFewPoints { have: usize, need: usize },

    #[error("class {class} has {have} samples, need at least {need}")]
    ClassTooSmall { class: usize, have: usize, need: usize },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
