use thiserror::Error;

/// Errors raised by the numeric, model, dataset and training layers.
#[derive(Debug, Error)]
pub enum PunnError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A probability map left the relative interior of the simplex.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PunnError>;

pub(crate) fn shape_err<S: Into<String>>(msg: S) -> PunnError {
    PunnError::Shape(msg.into())
}
