use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A feature has no meaningful value for this window (e.g. zero fundamental).
    #[error("undefined feature: {0}")]
    UndefinedFeature(&'static str),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// File exists but its contents cannot be parsed.
    #[error("{}: malformed file: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    /// Fingerprint, version, or dimension mismatch between artifacts.
    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::NotFound(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::InvalidInput(_) | Error::UndefinedFeature(_) | Error::Contract(_) => 4,
        }
    }
}
