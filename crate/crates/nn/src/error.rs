use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("missing gradient for '{0}'")]
    MissingGrad(String),
    #[error("empty batch: no valid elements to reduce over")]
    EmptyBatch,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate parameter name '{0}'")]
    DuplicateName(String),
    #[error("gradient check target must be scalar, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
