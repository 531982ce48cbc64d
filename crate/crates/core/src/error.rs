//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or grid extent does not match what an operation requires.
    #[error("shape mismatch on axis {axis}: expected {expected}, got {actual} ({context})")]
    ShapeMismatch {
        axis: usize,
        expected: usize,
        actual: usize,
        context: String,
    },

    #[error("invalid shape {0:?}: every extent must be >= 1 and sizes must agree")]
    BadShape(Vec<usize>),

    #[error("network role mismatch: expected {expected}, got {actual}")]
    RoleMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid convolution spec: {0}")]
    BadSpec(String),

    #[error("invalid channel ladder: {0}")]
    BadLadder(String),

    #[error("missing cached activations: {0}")]
    MissingTrace(String),

    #[error("unsupported facies count {0}: only 2 or 3 facies are supported")]
    UnsupportedFacies(usize),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("singular flow system: {0}")]
    Singular(String),

    #[error("linear solve did not reach the requested residual: {0}")]
    NoConvergence(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
