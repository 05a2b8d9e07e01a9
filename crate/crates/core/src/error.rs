use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("resource budget exceeded: {0}")]
    Budget(String),

    #[error("series truncation failed: {0}")]
    Truncation(String),

    #[error("replica {replica} failed: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Consistency(_) => "consistency",
            Error::Domain(_) => "domain",
            Error::Unsupported(_) => "unsupported",
            Error::Budget(_) => "budget",
            Error::Truncation(_) => "truncation",
            Error::Replica { source, .. } => source.kind(),
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}
