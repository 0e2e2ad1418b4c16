//! Error type shared by every module.

use crate::align::SeparationResult;
use crate::warpspace::WarpMean;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument: mismatched grids, out-of-range counts, bad warps.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A resampling target outside the source domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Sphere geometry is undefined (e.g. the log map at an antipodal point).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Linear algebra failure (singular covariance and the like).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The warp Karcher mean hit its iteration cap. Carries the last iterate.
    #[error("warp Karcher mean did not converge after {} iterations (|v| = {:.3e})", .0.iterations, .0.residual)]
    WarpMeanNotConverged(Box<WarpMean>),

    /// Phase-amplitude separation hit its iteration cap. Carries the last iterate.
    #[error("phase-amplitude separation did not converge after {} iterations", .0.iterations)]
    SeparationNotConverged(Box<SeparationResult>),

    /// Malformed input file. `line` and `column` are 1-based.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// True for failures caused by bad input or paths rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Argument(_) | Error::Domain(_) | Error::Parse { .. } | Error::Json(_) | Error::Io(_)
        )
    }
}
