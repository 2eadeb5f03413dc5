use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented invariant (schedule, target, config).
    #[error("validation error: {0}")]
    Validation(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A bound was requested whose hypotheses do not hold.
    #[error("hypothesis violation in {bound}: {condition}")]
    HypothesisViolation { bound: String, condition: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite score at chain {chain}, step {step} (t = {t})")]
    NonFiniteScore { chain: usize, step: usize, t: f64 },

    #[error("quadrature integrand not finite at s = {abscissa}")]
    NonFiniteIntegrand { abscissa: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn hypothesis(bound: &str, condition: impl Into<String>) -> Self {
        Error::HypothesisViolation {
            bound: bound.to_string(),
            condition: condition.into(),
        }
    }

    /// Process exit code: 2 validation, 3 hypothesis infeasibility, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Domain(_) | Error::Json(_) | Error::Io(_) => 2,
            Error::HypothesisViolation { .. } => 3,
            Error::Numerical(_)
            | Error::NonFiniteScore { .. }
            | Error::NonFiniteIntegrand { .. }
            | Error::Csv(_) => 4,
        }
    }
}
