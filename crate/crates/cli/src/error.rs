use conemarket::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// The inputs are well formed but the requested operation failed.
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Domain(_) => 1,
            CliError::Core(e) => match e {
                CoreError::DimensionMismatch { .. }
                | CoreError::ShapeMismatch(_)
                | CoreError::InvalidArgument(_)
                | CoreError::InvalidUtility(_)
                | CoreError::InvalidModel(_)
                | CoreError::InvalidTree(_)
                | CoreError::InvalidPath(_)
                | CoreError::EmptyGenerators
                | CoreError::ZeroGenerator(_)
                | CoreError::NonFinite(_) => 2,
                _ => 1,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
