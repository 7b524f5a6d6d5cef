//! Gaussian-process regression: squared-exponential ARD kernel, exact
//! posterior, FITC sparse posterior over inducing points, marginal-likelihood
//! gradients, and Adam hyperparameter optimization.

mod exact;
mod fitc;
mod hyperopt;
mod inducing;
mod kernel;

pub use exact::{fit_exact, log_marginal_and_grad, predict_exact, ExactGp};
pub use fitc::{fit_fitc, fitc_lml_and_grad, predict_fitc, SparseGp};
pub use hyperopt::{optimize_hyperparams, HyperOptConfig, HyperOptOutcome, ObjectiveKind};
pub use inducing::select_inducing;
pub use kernel::{kernel_diag_value, kernel_matrix, KernelParams};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix not positive definite after jitter escalation")]
    NotPositiveDefinite,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-finite objective at step {0}")]
    NonFiniteObjective(usize),
    #[error("hyperparameters must be strictly positive")]
    NonPositiveParams,
}

/// Jitter multipliers (of the mean diagonal) tried before giving up on a
/// Cholesky factorization.
pub(crate) const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Cholesky with jitter escalation; returns the lower factor and the
/// diagonal jitter that was added.
pub(crate) fn cholesky_with_jitter(matrix: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), GpError> {
    let n = matrix.nrows();
    let mean_diag = matrix.diagonal().sum() / n as f64;
    for &mult in &JITTER_LADDER {
        let jitter = mult * mean_diag;
        let jittered = if jitter == 0.0 {
            matrix.clone()
        } else {
            let mut m = matrix.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            m
        };
        if let Some(chol) = jittered.cholesky() {
            return Ok((chol.unpack(), jitter));
        }
    }
    Err(GpError::NotPositiveDefinite)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), GpError> {
    if expected == got {
        Ok(())
    } else {
        Err(GpError::DimensionMismatch { expected, got })
    }
}
