use crate::config::ConfigError;

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical contract violations.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),

    #[error("trajectory {trajectory}: {source}")]
    Engine { trajectory: u64, source: aposteriori_core::Error },

    #[error(transparent)]
    Numerical(#[from] aposteriori_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("output: {0}")]
    Output(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Engine { .. } | RunError::Numerical(_) => EXIT_NUMERICAL,
            RunError::Io(_) | RunError::Output(_) => 1,
        }
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Output(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Output(e.to_string())
    }
}
