use std::path::Path;

/// Every failure path maps to one documented exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("agent transport failed: {0}")]
    Transport(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Generation(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Internal(format!("{}: {e}", path.display()))
    }

    pub fn unreadable(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }
}
