use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("electrode pair ({i}, {j}) is invalid for {n} electrodes")]
    PairIndex { i: usize, j: usize, n: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("unknown phantom kind `{0}` (expected cross, v, two_rects or three_circles)")]
    UnknownPhantom(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("landweber diverged at iteration {iteration}: residual {residual:.3e} exceeds 1e6 x initial")]
    Diverged {
        iteration: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("degenerate calibration on channel {channel}: high ({high}) must exceed low ({low})")]
    Calibration { channel: usize, low: f64, high: f64 },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("empty frame list")]
    EmptyFrames,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }
}
