use thiserror::Error;

/// Library-wide error type. `Contract` and `Config` signal caller mistakes
/// (bad shapes, invalid hyperparameters); `Numeric` signals a run that
/// produced non-finite values and must abort; `Diagnostic` signals inputs
/// that are structurally valid but analytically degenerate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },
    #[error("contract violation in {op}: {message}")]
    Contract { op: &'static str, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value in {op}{}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Numeric {
        op: &'static str,
        location: Option<String>,
    },
    #[error("diagnostic error: {0}")]
    Diagnostic(String),
    #[error("singular matrix in {op}: smallest singular value {value:.3e} below {limit:.3e}")]
    Singular {
        op: &'static str,
        value: f64,
        limit: f64,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn contract(op: &'static str, message: impl Into<String>) -> Self {
        CoreError::Contract {
            op,
            message: message.into(),
        }
    }

    pub fn numeric(op: &'static str) -> Self {
        CoreError::Numeric { op, location: None }
    }

    pub fn numeric_at(op: &'static str, location: impl Into<String>) -> Self {
        CoreError::Numeric {
            op,
            location: Some(location.into()),
        }
    }
}
