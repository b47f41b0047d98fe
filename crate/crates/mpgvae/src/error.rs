use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of a subcommand. Each maps to a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Check(String),
    #[error("training diverged at epoch {epoch}: {what}; last good checkpoint is {last_good:?}")]
    Diverged {
        epoch: usize,
        what: String,
        last_good: Option<PathBuf>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] mpgvae_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) | CliError::Diverged { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Checkpoint(_) => 4,
            CliError::EmptyInput(_) => 5,
            CliError::Model(mpgvae_core::Error::Config(_)) => 2,
            CliError::Model(_) => 1,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
