use thiserror::Error;

/// Failure modes shared across the solver stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("{what} did not converge: {detail}")]
    NonConvergent { what: String, detail: String },

    #[error("failed to bracket a sign change for {what}")]
    BracketFailure { what: String },

    #[error("tail mass above c = {c} is zero; shortfall region is empty")]
    InfeasibleTail { c: f64 },

    #[error("shortfall subsidy is unbounded: {reason}")]
    Unbounded { reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state budget exceeded: {n} states (max {max})")]
    BudgetExceeded { n: usize, max: usize },

    #[error("verification requires a seed but none was configured")]
    SeedMissing,
}

pub type Result<T> = std::result::Result<T, SolverError>;

impl SolverError {
    pub fn non_convergent(what: &str, detail: impl Into<String>) -> Self {
        SolverError::NonConvergent { what: what.to_string(), detail: detail.into() }
    }
}
