use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image dimensions {width}x{height} for {len} samples")]
    Dimensions { width: usize, height: usize, len: usize },

    #[error("image is empty")]
    EmptyImage,

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown segment class {0:?}")]
    UnknownClass(String),

    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid anatomy graph: {0}")]
    Graph(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("image id mismatch: {0}")]
    ImageIdMismatch(String),

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

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
