//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Failure modes surfaced by library operations.
///
/// `InvalidArgument` covers precondition violations (bad shapes, out-of-range
/// parameters); the remaining variants carry enough context to report file
/// and data problems without re-reading the inputs.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller-supplied value violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Filesystem operation failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Raster container header or payload is unusable.
    #[error("malformed raster container {path}: {reason}")]
    MalformedContainer { path: PathBuf, reason: String },

    /// Not enough open (non-footprint) cells to satisfy a sampling request.
    #[error("too few open cells: requested {requested}, available {available}")]
    TooFewOpenCells { requested: usize, available: usize },

    /// A serialized artifact (manifest, weights, config) did not parse.
    #[error("malformed artifact {path}: {reason}")]
    MalformedArtifact { path: PathBuf, reason: String },

    /// Numeric breakdown during training or evaluation (non-finite loss or weight).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CoreError {
    /// Shorthand for `InvalidArgument` with a formatted message.
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
