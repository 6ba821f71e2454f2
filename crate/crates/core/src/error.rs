use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A documented precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    /// The inner function returned a non-finite value.
    #[error("inner function returned {value} at y = {y}, inner draw k = {k}")]
    Evaluation { y: String, k: u64, value: f64 },

    #[error("payoff returned {value} for x = {x}")]
    NonFinitePayoff { x: f64, value: f64 },

    #[error("refused: {0}")]
    Refused(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
