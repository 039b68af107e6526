use punn::PunnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or input; exit code 2.
    #[error("{0}")]
    Config(String),

    /// Training or fitting diverged; exit code 3.
    #[error("{0}")]
    Numeric(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) | Self::Other(_) => 1,
        }
    }
}

impl From<PunnError> for CliError {
    fn from(e: PunnError) -> Self {
        match e {
            PunnError::Numeric(_) => Self::Numeric(e.to_string()),
            PunnError::Io(io) => Self::Io(io),
            PunnError::Internal(_) => Self::Other(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}
