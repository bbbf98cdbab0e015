use thiserror::Error;

use crate::geometry::Region;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("refuge closure is not strictly inside the domain: {0}")]
    RefugeTouchesBoundary(String),
    #[error("habitat region (complement of the refuge) is not connected")]
    DisconnectedComplement,
    #[error("field lives on {found:?} but {expected:?} was required")]
    RegionMismatch { expected: Region, found: Region },
    #[error("refuge has no interior nodes")]
    EmptyRefuge,
    #[error("diffusion coefficient is not uniformly elliptic (min = {min})")]
    NonellipticCoefficient { min: f64 },
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("parameters outside the regime of this curve: {0}")]
    OutOfRegime(String),
    #[error("no sign change found on the scan bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("denominator 1 + alpha*u is not positive (min = {min})")]
    DegenerateDenominator { min: f64 },
    #[error("Newton reached {iterations} iterations with residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("corrector failed: {0}")]
    CorrectionFailed(String),
    #[error("step size underflow near a fold at lambda = {lambda}")]
    StallAtFold { lambda: f64 },
    #[error("state norm {norm:e} exceeded the ceiling at t = {time}")]
    BlowupDetected { time: f64, norm: f64 },
    #[error("non-finite state at t = {time}")]
    NonfiniteState { time: f64 },
    #[error("solution not found: {0}")]
    SolutionNotFound(String),
}
