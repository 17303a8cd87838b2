use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown reliability code {code} at {location}")]
    InvalidCode { code: u8, location: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A patch or tensor without a single valid observation.
    #[error("no valid observations in patch")]
    EmptyPatch,

    #[error("no valid samples in series")]
    EmptySeries,

    #[error("degenerate spectrum: all singular values are zero")]
    DegenerateSpectrum,

    #[error("eigen-decomposition did not converge for a {rows}x{cols} matrix")]
    SvdFailure { rows: usize, cols: usize },

    #[error("completion diverged (non-finite estimate) at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error(
        "trend filter did not converge in {iterations} iterations \
         (primal residual {primal:.3e}, dual residual {dual:.3e})"
    )]
    FilterNonConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("corrupt {file}: expected {expected} bytes, found {actual}")]
    Corrupt {
        file: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
