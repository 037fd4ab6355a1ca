use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("selection contains no observed pixels")]
    EmptySelection,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate ground plane (|b| = {b:e})")]
    DegeneratePlane { b: f64 },

    #[error("plane fit failed: {0}")]
    Fit(String),

    #[error("object extraction failed: {0}")]
    Extraction(String),

    #[error("object model too sparse: {count} points (minimum {min})")]
    TooSparse { count: usize, min: usize },

    #[error("rectification failed: {0}")]
    Rectification(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("no projected point falls inside the image")]
    Offscreen,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("bad file format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
