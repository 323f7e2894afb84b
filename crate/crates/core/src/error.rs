use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rational literal: {0:?}")]
    BadRational(String),
    #[error("atom space invalid: {0}")]
    BadSpace(String),
    #[error("measures live on different atom spaces")]
    SpaceMismatch,
    #[error("instance invalid: {0}")]
    BadInstance(String),
    #[error("plan invalid: {0}")]
    BadPlan(String),
    #[error("plan is not a refinement")]
    NotARefinement,
    #[error("plans are not comparable: {0}")]
    IncompatiblePlans(String),
    #[error("kernel malformed: {0}")]
    BadKernel(String),
    #[error("recession slope is infinite")]
    InfiniteRecessionSlope,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("epsilon out of range (need 0 < eps < 1/2)")]
    EpsilonOutOfRange,
    #[error("equilibrium construction failed: {0}")]
    Construction(String),
    #[error("allocation invalid: {0}")]
    BadAllocation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
