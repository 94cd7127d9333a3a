use thiserror::Error;

/// Errors produced by the gdtm library.
#[derive(Debug, Error)]
pub enum Error {
    /// A dimension or count was invalid (empty system, zero vertices, ...).
    #[error("invalid size: {0}")]
    InvalidSize(String),

    /// Two operands had incompatible shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A parameter value was out of its legal range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A vertex or element index was out of range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A numerical failure (NaN/Inf, singular system, divergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input text (graph files, CSV records).
    #[error("parse error: {0}")]
    Parse(String),

    /// A checkpoint/adjacency/model combination that cannot run together.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
