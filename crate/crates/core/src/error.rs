use thiserror::Error;

/// Errors raised by the screening library.
#[derive(Debug, Error)]
pub enum ScreenError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigensolver did not converge after {matvecs} matrix-vector products (residuals {residuals:?}, tolerance {tolerance:e})")]
    NoConvergence {
        matvecs: usize,
        residuals: Vec<f64>,
        tolerance: f64,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("empty validation set: no held-out pairs were sampled; increase tau or rho")]
    EmptyValidation,

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ScreenError> = std::result::Result<T, E>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ScreenError::Parameter(msg.into()))
}
