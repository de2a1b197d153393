use kfp_core::KfpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid configuration; `location` is `file:line` or
    /// `file:line:column` when known.
    #[error("{}{message}", location.as_ref().map(|l| format!("{l}: ")).unwrap_or_default())]
    Config { location: Option<String>, message: String },

    #[error("{0}")]
    Numerical(String),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            location: None,
            message: message.into(),
        }
    }

    /// 2 for configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Input-shaped core errors become configuration errors; the rest are
/// numerical failures.
impl From<KfpError> for CliError {
    fn from(e: KfpError) -> Self {
        match e {
            KfpError::InvalidInput(_)
            | KfpError::DimensionMismatch { .. }
            | KfpError::BadKappa(_)
            | KfpError::EllipticityViolation { .. }
            | KfpError::GridMismatch(_) => CliError::config(e.to_string()),
            KfpError::Io(m) => CliError::Io(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
