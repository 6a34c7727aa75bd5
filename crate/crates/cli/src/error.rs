use std::path::PathBuf;

use crate::stage::Stage;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing artifact {path}; it is produced by `plr {producer}`", producer = producer.name())]
    MissingArtifact { path: PathBuf, producer: Stage },

    #[error("{path} belongs to configuration {found}, this run is {expected}; refusing to mix artifacts")]
    HashMismatch {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error(transparent)]
    Nn(#[from] plr_nn::Error),

    #[error(transparent)]
    Core(#[from] plr_core::Error),

    #[error("rendering {path}: {reason}")]
    Render { path: PathBuf, reason: String },
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingArtifact { .. } => 3,
            CliError::HashMismatch { .. } => 4,
            CliError::Core(plr_core::Error::MissingFile { .. }) => 3,
            CliError::Core(plr_core::Error::InvalidInput(_) | plr_core::Error::Format { .. }) => 2,
            CliError::Nn(plr_nn::Error::Core(plr_core::Error::MissingFile { .. })) => 3,
            CliError::Nn(plr_nn::Error::Diverged { .. }) => 5,
            CliError::Nn(plr_nn::Error::OracleBelowThreshold { .. }) => 6,
            _ => 1,
        }
    }
}
