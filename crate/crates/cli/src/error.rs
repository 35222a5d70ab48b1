use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit status reported by the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Model(#[from] bprttd_core::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(path: &Path, msg: impl Into<String>) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: msg.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        CliError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> ExitKind {
        use bprttd_core::Error as E;
        match self {
            CliError::Usage(_) => ExitKind::Usage,
            CliError::Data { .. } | CliError::Io { .. } | CliError::Csv { .. } => ExitKind::Data,
            CliError::Model(e) => match e {
                E::Config(_) | E::TooFewDraws { .. } => ExitKind::Usage,
                E::NonFiniteRate { .. } | E::Chain { .. } => ExitKind::Numerical,
                _ => ExitKind::Data,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind() as i32
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
