use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution error: gap of {gap_cells:.2} grid spacings is below the minimum of 4")]
    Resolution { gap_cells: f64 },

    #[error("flow solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("linear solver failure: {0}")]
    LinearSolve(String),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },

    #[error("velocity query inside solid at ({x:.6}, {y:.6})")]
    SolidQuery { x: f64, y: f64 },

    #[error("trajectory stalled after {steps} steps at ({x:.6}, {y:.6})")]
    Stall { steps: usize, x: f64, y: f64 },

    #[error("no mode crossing in bracket: low end {low} is {low_mode}, high end {high} is {high_mode}")]
    NoCrossing {
        low: f64,
        high: f64,
        low_mode: String,
        high_mode: String,
    },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format version mismatch: expected {expected}, found {found}")]
    Version { expected: u32, found: u32 },

    #[error("variant mismatch: expected {expected}, found {found}")]
    VariantMismatch { expected: String, found: String },

    #[error("undefined variance: truth values are constant")]
    UndefinedVariance,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 usage/domain, 3 numerical failure, 4 I/O and file contents.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Usage(_) | Error::Config(_) | Error::Resolution { .. } => 2,
            Error::Convergence { .. }
            | Error::LinearSolve(_)
            | Error::Diverged { .. }
            | Error::SolidQuery { .. }
            | Error::Stall { .. }
            | Error::NoCrossing { .. }
            | Error::Degenerate(_)
            | Error::UndefinedVariance => 3,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Version { .. }
            | Error::VariantMismatch { .. }
            | Error::Io { .. }
            | Error::Json(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
