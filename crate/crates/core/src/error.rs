use thiserror::Error;

#[derive(Debug, Error)]
pub enum HatError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("coordinate {0} exceeds the supported range of +/-2^30")]
    CoordinateOverflow(i64),
    #[error("linear system of size {size} exceeds the solver cap of {cap}")]
    SolverCapExceeded { size: usize, cap: usize },
    #[error("singular or ill-conditioned system (pivot ratio {pivot_ratio:e})")]
    SingularSystem { pivot_ratio: f64 },
    #[error("distribution sums to {sum} (tolerance {tol:e})")]
    NormalizationFailure { sum: f64, tol: f64 },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("monte carlo step budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("value {value} outside the admissible range {range}")]
    OutOfRange { value: f64, range: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HatError>;
