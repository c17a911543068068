//! Error type shared by every module.

use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point was outside the region where an evaluator is defined.
    #[error("point {z} lies outside {what}")]
    Domain { z: Complex64, what: String },

    #[error("series did not reach tolerance {tol:e} within {terms} terms (tail {tail:e})")]
    Truncation { tol: f64, terms: usize, tail: f64 },

    /// Values that must be positive by theory came out otherwise.
    #[error("inconsistent jets at {z}: {detail}")]
    Inconsistency { z: Complex64, detail: String },

    #[error("cannot choose lambda: critical point of rho near {z} where rho_zzbar = {rho_zzbar:e}")]
    CannotChooseLambda { z: Complex64, rho_zzbar: f64 },

    #[error("subharmonic grid check failed at {z}: rho_zzbar = {value:e}")]
    SubharmonicCheck { z: Complex64, value: f64 },

    #[error("quadrature too coarse: Gram residual {residual:e} exceeds {limit:e}")]
    QuadratureTooCoarse { residual: f64, limit: f64 },

    #[error("step size fell below {min_step:e} at t = {t}")]
    StepFailure { t: f64, min_step: f64 },

    #[error("winding step too coarse at sample {index}: |darg| = {darg}")]
    Resample { index: usize, darg: f64 },

    #[error("no loop found: {0}")]
    NoLoopFound(String),

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(z: Complex64, what: impl Into<String>) -> Self {
        Error::Domain { z, what: what.into() }
    }

    pub(crate) fn inconsistency(z: Complex64, detail: impl Into<String>) -> Self {
        Error::Inconsistency { z, detail: detail.into() }
    }

    /// True for failures that reflect numerical quality rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Truncation { .. }
                | Error::Inconsistency { .. }
                | Error::CannotChooseLambda { .. }
                | Error::SubharmonicCheck { .. }
                | Error::QuadratureTooCoarse { .. }
                | Error::StepFailure { .. }
                | Error::NoLoopFound(_)
                | Error::NoConvergence(_)
        )
    }
}
