use thiserror::Error;

/// Errors produced by the PINN pipeline.
#[derive(Debug, Error)]
pub enum PinnError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("bound unavailable: {0}")]
    BoundUnavailable(String),

    #[error("non-finite {quantity} at {stratum} point {point:?}")]
    NonFinite {
        quantity: String,
        stratum: String,
        point: Vec<f64>,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PinnError> = std::result::Result<T, E>;
