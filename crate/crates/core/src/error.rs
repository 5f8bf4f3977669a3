//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("prism {index}: {reason}")]
    InvalidPrism { index: usize, reason: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("unknown semantic label {0:?}")]
    UnknownLabel(String),

    #[error("scene bounds mismatch between epochs")]
    MismatchedBounds,

    #[error("degenerate hull: fewer than 3 non-collinear points")]
    DegenerateHull,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("no candidate views available")]
    EmptyPool,

    #[error("degenerate target region")]
    DegenerateTarget,
}
