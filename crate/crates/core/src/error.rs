use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("tensor format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("dead layer: output gradient is identically zero")]
    DeadLayer,

    #[error(
        "partial reconstruction: layer {dead_layer} is dead, deepest recovered input is layer {deepest_recovered}"
    )]
    PartialReconstruction {
        dead_layer: usize,
        deepest_recovered: usize,
        recovered: Vec<crate::Tensor>,
    },

    #[error("ill-formed mixup label: {0}")]
    IllFormedMixup(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
