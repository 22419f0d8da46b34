use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: zero-sized image")]
    EmptyImage { path: PathBuf },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("{0} requires at least one foreground pixel")]
    EmptyForeground(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("clip {clip_id}: missing predictions for frames {frames:?}")]
    MissingPredictions { clip_id: String, frames: Vec<usize> },

    #[error("clip {0}: no evaluable frames")]
    NoEvaluableFrames(String),

    #[error("propagator: {0}")]
    Propagator(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
