use thiserror::Error;

use crate::solvers::SolverState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid feasible set: {0}")]
    InvalidSet(String),

    #[error("could not bracket the projection multiplier (inconsistent set description)")]
    BracketFailure,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("fractional denominator b·x + d = {0} is not positive")]
    NonPositiveDenominator(f64),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("iterate diverged at iteration {iter}: {reason}")]
    Diverged {
        iter: usize,
        reason: String,
        state: Box<SolverState>,
    },

    #[error("trajectory diverged at t = {time}")]
    FlowDiverged { time: f64 },
}
