use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite entries in flux Jacobian A_{j} at w = {state:?}")]
    Evaluation { j: usize, state: Vec<f64> },

    #[error("model error: {0}")]
    Model(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("eigenproblem failed at eta = {eta:?}: {reason}")]
    Eigen { eta: Vec<f64>, reason: String },

    #[error("path too coarse for eigenvalue matching near step {index}; refine the sampling")]
    PathTooCoarse { index: usize },

    #[error("no connecting orbit found (residual {residual:.3e})")]
    Convergence { residual: f64 },

    #[error("center spectrum: eigenvalue with |Re mu| = {min_re:.3e} on or near the imaginary axis")]
    CenterSpectrum { min_re: f64 },

    #[error("dichotomy error: {0}")]
    Dichotomy(String),

    #[error("subspace degeneration at x = {x:.4}: turning point suspected (angle {angle:.3e})")]
    TurningPointSuspected { x: f64, angle: f64 },

    #[error("frame ill-conditioned at x = {x:.4} (condition {cond:.3e})")]
    Conditioning { x: f64, cond: f64 },

    #[error("propagator window overflow between x = {from:.3} and x = {to:.3}; reduce the window width")]
    WindowSize { from: f64, to: f64 },

    #[error("stability error: {0}")]
    Stability(String),

    #[error("geometric regularity failure: {0}")]
    GeometricRegularity(String),

    #[error("CFL violation: dt = {dt:.3e} exceeds limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("instability: sup norm {norm:.3e} exceeded cap at t = {t:.4}")]
    Instability { norm: f64, t: f64 },

    #[error("usage error at `{field}`: {message}")]
    Usage { field: String, message: String },

    #[error("incompatible report versions: {0}")]
    Compatibility(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn usage(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Usage {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
