use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("obj parse error: {0}")]
    Obj(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("too few valid pixels: got {got}, need {need}")]
    TooFewValidPixels { got: usize, need: usize },
}

pub type Result<T> = std::result::Result<T, GeomError>;
