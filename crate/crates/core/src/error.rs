use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("metric is not positive definite at grid point {point} (min eigenvalue {min_eigenvalue:e})")]
    NonPositiveMetric { point: usize, min_eigenvalue: f64 },

    #[error("input 1-form is not closed: symmetry defect {defect:e} exceeds {limit:e}")]
    NonClosed { defect: f64, limit: f64 },

    #[error("Jacobi iteration did not converge at grid point {point}")]
    JacobiNoConvergence { point: usize },

    #[error("singular matrix at grid point {point}")]
    Singular { point: usize },

    #[error("flow diverged at step {step} (t = {t}): {reason}")]
    Diverged { step: u64, t: f64, reason: String },

    #[error("maximum principle violated: min v = {min_v:e} at t = {t}")]
    MaxPrincipleViolation { t: f64, min_v: f64 },

    #[error("residual window needs {needed} samples, got {got}")]
    WindowTooShort { needed: usize, got: usize },

    #[error("series has a non-positive entry {value:e} at t = {t}")]
    NonPositiveSeries { t: f64, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot parse trigonometric polynomial {input:?}: {reason}")]
    TrigParse { input: String, reason: String },

    #[error("no samples")]
    NoSamples,

    #[error("bootstrap did not converge within t_max = {t_max} (final osc θ = {osc:e})")]
    NotConverged { t_max: f64, osc: f64 },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems, 3 for
    /// numerical failures and I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::TrigParse { .. } | Error::InvalidGrid(_) | Error::InvalidArgument(_) => 2,
            _ => 3,
        }
    }
}
