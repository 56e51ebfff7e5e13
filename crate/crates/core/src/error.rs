use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("gram matrix for output {output} is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { output: usize, jitter: f64 },

    #[error("gram matrix for output {output} is ill-conditioned (estimate {condition:e} > {limit:e})")]
    IllConditioned {
        output: usize,
        condition: f64,
        limit: f64,
    },

    #[error("posterior variance {value:e} for output {output} is negative beyond roundoff")]
    NegativeVariance { output: usize, value: f64 },

    #[error("hyperparameter search diverged in every restart for output {output} (best log-likelihood {best_log_likelihood})")]
    HyperparameterSearchFailed {
        output: usize,
        best_log_likelihood: f64,
    },

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("candidate search exceeded its node budget of {budget}")]
    NodeBudgetExhausted { budget: usize },

    #[error("counterexample {state:?} was already in the sample set; solver and verifier disagree")]
    DuplicateCounterexample { state: Vec<f64> },

    #[error("no safe input at state {state:?} (condition values {values:?})")]
    NoSafeInput { state: Vec<f64>, values: Vec<f64> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error in {file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
