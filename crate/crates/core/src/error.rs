use alloc::string::String;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("size limit exceeded: {requested} > {limit}")]
    Size { requested: usize, limit: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invariant subspace leaks: norm {leakage:e} outside the subspace")]
    InvarianceViolation { leakage: f64 },
    #[error("polynomial degree overflow: off-grid residual {residual:e}")]
    DegreeOverflow { residual: f64 },
    #[error("parameter {0} is not shift-compatible")]
    UnsupportedGradient(usize),
    #[error("input ({theta1}, {theta2}) is outside the promise set")]
    PromiseViolation { theta1: f64, theta2: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = core::result::Result<T, Error>;
