//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the vectorization library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem-level failure (missing file, unreadable, unwritable).
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents (bad header, truncated data, unsupported
    /// construct). The message names the offending location when known.
    #[error("format error: {0}")]
    Format(String),

    /// Two inputs that must share dimensions do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A precondition on an argument or configuration value was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
