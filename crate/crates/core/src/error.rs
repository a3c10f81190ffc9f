use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("image dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("empty point set")]
    EmptySet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model leaves the unit cube: {0}")]
    OutOfBounds(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("too few gaussians: {count} (need more than {min})")]
    TooFewGaussians { count: usize, min: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
