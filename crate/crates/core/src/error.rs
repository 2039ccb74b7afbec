use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// A parameter set or input violates its declared invariants.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

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

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("malformed PLY at byte {offset}: {reason}")]
    Ply { offset: u64, reason: String },

    #[error("depth out of encodable range: {count} pixel(s) at or beyond 65.535 m")]
    DepthOutOfRange { count: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },

    #[error("no valid overlap between prediction and ground truth")]
    NoValidOverlap,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("frame {frame_id}: {source}")]
    Frame {
        frame_id: u32,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from bad configuration or parameters rather
    /// than from a failure while processing data.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Invalid { .. } | Error::Json { .. } => true,
            Error::Frame { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
