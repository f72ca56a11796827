use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Core(#[from] chirp_oac::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit status: 2 for configuration errors, 3 for infeasible
    /// solves, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(chirp_oac::Error::Config(_)) => 2,
            CliError::Infeasible(_) | CliError::Core(chirp_oac::Error::Infeasible(_)) => 3,
            _ => 1,
        }
    }
}
