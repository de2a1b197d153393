use thiserror::Error;

/// Errors raised by the solvers and their inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KfpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ellipticity constant must be ≥ 1 (got {0})")]
    BadKappa(f64),

    #[error("ellipticity violated at {point:?}: eigenvalue {eigenvalue} outside [{lower}, {upper}]")]
    EllipticityViolation {
        point: Vec<f64>,
        eigenvalue: f64,
        lower: f64,
        upper: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge: {message} (residual history {history:?})")]
    NonConvergence { message: String, history: Vec<f64> },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for KfpError {
    fn from(e: std::io::Error) -> Self {
        KfpError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, KfpError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(KfpError::InvalidInput(msg.into()))
}
