use thiserror::Error;

/// Errors raised anywhere in the lab. Variants are grouped by the kind of
/// contract that was broken, not by the module that noticed it.
#[derive(Debug, Error)]
pub enum BohmError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("node: density {rho:.3e} at {location} is at or below threshold {threshold:.3e}")]
    Node {
        rho: f64,
        threshold: f64,
        location: String,
    },

    #[error("unitarity violated: relative norm drift {drift:.3e} after {steps} steps")]
    Unitarity { drift: f64, steps: usize },

    #[error("self-adjointness violated: imaginary residual {residual:.3e} of <A>")]
    SelfAdjointness { residual: f64 },

    #[error("truncation: {0}")]
    Truncation(String),

    #[error("regime: {0}")]
    Regime(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("validation error at `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BohmError {
    pub fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        BohmError::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn is_node(&self) -> bool {
        matches!(self, BohmError::Node { .. })
    }
}

pub type Result<T> = std::result::Result<T, BohmError>;
