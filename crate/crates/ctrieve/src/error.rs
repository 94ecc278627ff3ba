use std::path::PathBuf;

use thiserror::Error;

/// Command failure, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric divergence: {0}")]
    Divergence(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Divergence(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn data(msg: impl std::fmt::Display) -> CliError {
        CliError::Data(msg.to_string())
    }

    pub fn config(msg: impl std::fmt::Display) -> CliError {
        CliError::Config(msg.to_string())
    }
}

impl From<ctrieve_core::Error> for CliError {
    fn from(e: ctrieve_core::Error) -> Self {
        use ctrieve_core::Error as E;
        match e {
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            E::InvalidParameter(_) | E::NonSquareRotation(_) | E::NotDivisible { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}
