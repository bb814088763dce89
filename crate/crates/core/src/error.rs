use thiserror::Error;

use crate::subqp::SubproblemSolution;

pub type Result<T, E = SqsdpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SqsdpError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("vector of length {0} is not a packed symmetric matrix (length must be d(d+1)/2)")]
    NotTriangular(usize),

    #[error("symmetric eigensolver did not converge (matrix Frobenius norm {norm:.3e})")]
    EigenFailure { norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("subproblem matrix M is not positive definite (lambda_min = {lambda_min:.3e})")]
    NotPositiveDefinite { lambda_min: f64 },

    #[error(
        "subproblem did not converge after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})"
    )]
    SubproblemNonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
        best: Box<SubproblemSolution>,
    },

    #[error("line search failed after {ell_max} backtracks (directional bound {delta:.3e}, merit {merit:.6e})")]
    LineSearchFailure {
        ell_max: u32,
        delta: f64,
        merit: f64,
        /// `(alpha, F(x + alpha p))` for every trial step.
        samples: Vec<(f64, f64)>,
    },
}
