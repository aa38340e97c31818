//! Crate-wide error type and the exit-code contract used by the CLI.

use std::path::PathBuf;

/// Process exit codes: `0` success, `1` usage error, `2` data/validation
/// error, `3` backend/transport error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Data = 2,
    Backend = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record failed schema or vocabulary validation. `line` is 1-based
    /// within the offending file; 0 means the record did not come from a file.
    #[error("{path}:{line}: {msg}")]
    Schema {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate id {id} at {path}:{line}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("missing input: {0} (run the producing stage first)")]
    MissingInput(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    /// Precondition violation in a library call (bad argument, empty input
    /// where non-empty is required, day after the anchor, ...).
    #[error("{0}")]
    Invalid(String),

    #[error("backend {backend}: {msg}")]
    Backend { backend: String, msg: String },
}

impl Error {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Error::Backend { .. } => ExitCode::Backend,
            _ => ExitCode::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), line, msg: msg.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn backend(backend: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Backend { backend: backend.into(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
