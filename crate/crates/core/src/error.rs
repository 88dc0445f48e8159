use thiserror::Error;

use crate::model::Branch;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by the spectral solvers.
///
/// Numerical payloads are narrowed to `f64` so the error type stays
/// independent of the scalar the computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid operator specification: {0}")]
    InvalidOperator(String),

    #[error("invalid potential specification: {0}")]
    InvalidPotential(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation at {at} is within {guard:e} of a pole")]
    PoleProximity { at: f64, guard: f64 },

    #[error("no sign change on [{lo}, {hi}] (f = {f_lo:e}, {f_hi:e})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("no root on the requested branch: {0}")]
    NoRoot(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("bracket around {center} captured {count} sign changes")]
    BracketCapture { center: f64, count: usize },

    #[error("bracket [{lo}, {hi}] would cross the pole at lambda = 0")]
    PoleStraddle { lo: f64, hi: f64 },

    #[error("empty counting window: {0}")]
    EmptyWindow(String),

    #[error("insufficient data for a fit: {0}")]
    InsufficientSpan(String),

    #[error("Cholesky factorization failed at pivot {index} (value {pivot:e})")]
    Cholesky { index: usize, pivot: f64 },

    #[error("misaligned pairing: {0}")]
    Misaligned(String),

    #[error("channel {k}, {branch}: {source}")]
    Channel {
        k: usize,
        branch: Branch,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_channel(self, k: usize, branch: Branch) -> Self {
        Error::Channel {
            k,
            branch,
            source: Box::new(self),
        }
    }

    /// Strips channel context.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Channel { source, .. } => source.root_cause(),
            other => other,
        }
    }

    /// True for errors caused by bad input rather than numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self.root_cause(),
            Error::InvalidOperator(_)
                | Error::InvalidPotential(_)
                | Error::InvalidArgument(_)
                | Error::EmptyWindow(_)
        )
    }
}
