use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid argument or configuration value.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A signal or block sequence does not have the expected length.
    #[error("framing error: expected {expected} samples, got {actual}")]
    Framing { expected: usize, actual: usize },
    /// The requested operating point cannot be met.
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
