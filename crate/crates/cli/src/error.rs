use std::path::PathBuf;

use switchmargin_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(
        "no stored certificate{detail} for this problem in {cache}; run `switchmargin margin-lower <problem>` first"
    )]
    MissingCertificate { cache: PathBuf, detail: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Io { .. } | CliError::MissingCertificate { .. } => 1,
            CliError::Core(e) => match e {
                CoreError::NotHurwitz { .. } => 2,
                CoreError::SweepExhausted { .. } => 4,
                CoreError::InvalidArgument(_) | CoreError::DimensionMismatch(_) | CoreError::NotSquare { .. } | CoreError::NonFinite(_) => 1,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
