//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("Laurent coefficient sum vanishes at I1 = {0}")]
    DenominatorZero(f64),
    #[error("singular order {found} exceeds the form order {max}")]
    OrderMismatch { found: usize, max: usize },
    #[error("step would cross the critical set I1 = 0 near t = {0}")]
    CrossedCriticalSet(f64),
    #[error("energy drift {drift:e} in a single step exceeds tolerance {tol:e}; reduce dt")]
    StepTooLarge { drift: f64, tol: f64 },
    #[error("small divisor {divisor:e} below alpha = {alpha:e} for mode {mode:?}")]
    SmallDivisor {
        mode: Vec<i32>,
        divisor: f64,
        alpha: f64,
    },
    #[error("non-resonance check failed: {0}")]
    NonResonanceViolated(String),
    #[error("Lie series tail bound diverges: 2e|DW|/delta = {ratio:e} >= 1")]
    LieSeriesDiverges { ratio: f64 },
    #[error("mode/degree capping lost {lost:e}, budget {budget:e}")]
    CapExceeded { lost: f64, budget: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("remainder norm increased on two consecutive iterations (q = {0})")]
    DivergenceDetected(usize),
    #[error("action point is not in the surviving set: {0}")]
    NotInSurvivingSet(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shrunk sampling domain G - 2*gamma/mu is empty")]
    EmptyShrunkDomain,
    #[error("mode weight |k|_omega vanishes away from the critical set")]
    DegenerateMode,
    #[error("inner profile rejected: {0}")]
    BadInnerSpec(String),
    #[error("system is not simple: {0}")]
    NotSimple(String),
    #[error("evaluation range crosses a branch point: {0}")]
    BranchCrossing(String),
}

pub type Result<T> = std::result::Result<T, Error>;
