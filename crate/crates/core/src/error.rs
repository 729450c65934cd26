use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("IoU is undefined for two empty masks")]
    UndefinedIou,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("corrupt data: {0}")]
    CorruptData(String),

    #[error("no admissible placement found after {attempts} attempts")]
    PlacementFailure { attempts: usize },

    #[error("cluster generation failed after {attempts} restarts")]
    GenerationFailure { attempts: usize },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("io error on {path}: {source}")]
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
}

impl Error {
    /// Stable machine-readable kind, used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } => "invalid-input",
            Error::UndefinedIou => "undefined-iou",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::CorruptData(_) => "corrupt-data",
            Error::PlacementFailure { .. } => "placement-failure",
            Error::GenerationFailure { .. } => "generation-failure",
            Error::Parse { .. } => "parse-error",
            Error::Io { .. } => "io-error",
            Error::Image { .. } => "image-error",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
