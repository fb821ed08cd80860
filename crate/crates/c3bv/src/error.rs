//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum C3bvError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("projection input is all-zero after clamping and no fallback was supplied")]
    DegenerateProjection,

    #[error("rank-deficient system at lambda = 0 (condition number {cond:.3e} >= 1e12)")]
    RankDeficient { cond: f64 },

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("sweep cell (lambda={lambda}, mode={mode}, replicate={replicate}): {source}")]
    Cell {
        lambda: f64,
        mode: String,
        replicate: usize,
        #[source]
        source: Box<C3bvError>,
    },
}

pub type Result<T> = std::result::Result<T, C3bvError>;

impl C3bvError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        C3bvError::Io {
            path: path.into(),
            source,
        }
    }
}
