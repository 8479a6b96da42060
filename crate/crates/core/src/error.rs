use std::path::PathBuf;

use crate::backend::BackendKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Grid or mask dimensions are zero or disagree with each other.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Run-length data violates the mask invariants.
    #[error("invalid run-length data: {0}")]
    InvalidRuns(String),

    /// Two trajectories (or a trajectory and a refinement) do not line up
    /// frame-for-frame.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A document failed to parse; `path` points at the offending node.
    #[error("parse error in {file} at `{path}`: {message}")]
    Parse {
        file: String,
        path: String,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The backend could not be reached or refused the request.
    #[error("{kind} backend error: {message}")]
    Backend {
        kind: BackendKind,
        message: String,
        retryable: bool,
    },

    /// The backend answered, but the answer violates the wire protocol.
    #[error("{kind} protocol error: {message}")]
    Protocol { kind: BackendKind, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn protocol(kind: BackendKind, message: impl Into<String>) -> Self {
        Error::Protocol {
            kind,
            message: message.into(),
        }
    }
}
