//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem failure while reading or writing `path`. The cause is part
    /// of the message itself, so no `source()` is exposed to report twice.
    #[error("{path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },

    /// A header or config file failed to parse as JSON.
    #[error("{path}: {cause}")]
    Json {
        path: PathBuf,
        cause: serde_json::Error,
    },

    /// A file parsed but violates its format contract (wrong schema, wrong
    /// payload size, unsupported dtype, ...).
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Input values are structurally valid but unusable (non-finite samples,
    /// zero dynamic range, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A caller-supplied parameter is out of its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two inputs that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A pluggable stage broke its interface contract (changed grid shape,
    /// produced non-finite values, wrong texture-code length, ...).
    #[error("stage contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, cause: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
