//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by the linear algebra kernels, the protocol stages and
/// the Monte-Carlo harness.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Matrix shapes do not line up for the requested operation.
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite: pivot {index} = {value:.3e}")]
    NotPositiveDefinite { index: usize, value: f64 },

    /// The matrix handed to a solver is not Hermitian within tolerance.
    #[error("matrix is not Hermitian: max asymmetry {asymmetry:.3e}")]
    NotHermitian { asymmetry: f64 },

    /// Power iteration did not converge within the iteration budget.
    /// Callers may retry with a different starting vector.
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    PowerIterationDiverged { iterations: usize, residual: f64 },

    /// An estimator statistic collapsed below the usable threshold.
    #[error("degenerate estimate: statistic magnitude {magnitude:.3e}")]
    DegenerateEstimate { magnitude: f64 },

    /// A bidirectional calibration measurement is too small to divide by.
    #[error("degenerate calibration measurement: |z21| = {magnitude:.3e}")]
    DegenerateMeasurement { magnitude: f64 },

    /// The frequency search grid is empty or inverted.
    #[error("empty frequency search grid")]
    EmptySearchGrid,

    /// A parameter failed validation.
    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::DimMismatch {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl ToString) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
