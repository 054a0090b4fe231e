use thiserror::Error;

/// Failure of a CLI command, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or unreadable configuration (exit status 2).
    #[error("config error: {0}")]
    Config(String),
    /// The run itself failed (exit status 1).
    #[error("run failed: {0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl From<radvi_core::Error> for CliError {
    fn from(e: radvi_core::Error) -> Self {
        match e {
            radvi_core::Error::Config(_) | radvi_core::Error::Dimension { .. } => CliError::Config(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
