use thiserror::Error;

/// Errors produced by model validation, simulation and the backward solver.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("generator evaluation produced a non-finite value at {context}")]
    Evaluation { context: String },

    #[error("regression failed at step {step}: {reason} (condition indicator {condition:.3e})")]
    Regression {
        step: usize,
        reason: String,
        condition: f64,
    },

    #[error(
        "implicit solve did not converge (path {path}, step {step}, last residual {residual:.3e})"
    )]
    ImplicitSolve {
        path: usize,
        step: usize,
        residual: f64,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("comparison preflight failed: {0}")]
    ComparisonPreflight(String),
}

impl Error {
    /// Attach the backward step index to a propagated solver error.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Regression {
                reason, condition, ..
            } => Error::Regression {
                step,
                reason,
                condition,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
