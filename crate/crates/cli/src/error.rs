use nestmlmc::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent configuration. Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Failure while evaluating the model. Exit code 3.
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn parse(e: &serde_json::Error) -> Self {
        // serde_json appends "at line L column C" itself.
        Self::Config(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Evaluation(_) | Self::Io(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Evaluation { .. } | CoreError::NonFinitePayoff { .. } => Self::Evaluation(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.into())
    }
}
