//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A geometric value violates its construction invariants.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Two masks compared on different pixel grids.
    #[error("mask grid mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),

    /// A run-length encoding does not describe a valid mask.
    #[error("invalid RLE: {0}")]
    InvalidRle(String),

    /// A caller broke a documented precondition (e.g. a hard prediction
    /// where a score is required).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration (thresholds, caps, metric/task combinations).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An input file does not match the expected schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    /// An annotation references an image or category that does not exist.
    #[error("dangling reference: {0}")]
    DanglingReference(String),

    /// Nothing to evaluate: every value the operation would produce is
    /// undefined.
    #[error("undefined result: {0}")]
    Undefined(String),

    /// A parameter combination the engine deliberately does not support.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
