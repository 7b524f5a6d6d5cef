//! Squared-exponential kernel with one lengthscale per input dimension.

use super::{check_dim, GpError};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Kernel hyperparameters, stored as logs for unconstrained optimization.
///
/// `k(x, x') = signal_var * exp(-1/2 * sum_d (x_d - x'_d)^2 / lengthscale_d^2)`
/// with independent Gaussian observation noise of variance `noise_var`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    log_signal_var: f64,
    log_lengthscales: Vec<f64>,
    log_noise_var: f64,
}

impl KernelParams {
    pub fn new(signal_var: f64, lengthscales: &[f64], noise_var: f64) -> Result<Self, GpError> {
        if signal_var <= 0.0 || noise_var <= 0.0 || lengthscales.iter().any(|&l| l <= 0.0) {
            return Err(GpError::NonPositiveParams);
        }
        Ok(KernelParams {
            log_signal_var: signal_var.ln(),
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            log_noise_var: noise_var.ln(),
        })
    }

    /// Unit signal and lengthscales with `noise_var = 0.1`, the default
    /// starting point on standardized features.
    pub fn default_init(dim: usize) -> Self {
        KernelParams {
            log_signal_var: 0.0,
            log_lengthscales: vec![0.0; dim],
            log_noise_var: 0.1_f64.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn lengthscale(&self, d: usize) -> f64 {
        self.log_lengthscales[d].exp()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }

    /// Log-parameter vector `[log signal_var, log l_1..l_D, log noise_var]`.
    pub fn to_log_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.log_signal_var);
        v.extend_from_slice(&self.log_lengthscales);
        v.push(self.log_noise_var);
        v
    }

    pub fn from_log_vec(logs: &[f64]) -> Self {
        assert!(logs.len() >= 3, "log vector needs at least three entries");
        KernelParams {
            log_signal_var: logs[0],
            log_lengthscales: logs[1..logs.len() - 1].to_vec(),
            log_noise_var: logs[logs.len() - 1],
        }
    }
}

/// Cross-covariance matrix: entry `(i, j)` is `k(a_i, b_j)`.
pub fn kernel_matrix(
    params: &KernelParams,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GpError> {
    let dim = params.dim();
    check_dim(dim, a.ncols())?;
    check_dim(dim, b.ncols())?;
    let signal = params.signal_var();
    let inv_l2: Vec<f64> = (0..dim)
        .map(|d| {
            let l = params.lengthscale(d);
            1.0 / (l * l)
        })
        .collect();
    let mut k = DMatrix::zeros(a.nrows(), b.nrows());
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            let mut acc = 0.0;
            for (d, &il2) in inv_l2.iter().enumerate() {
                let diff = a[(i, d)] - b[(j, d)];
                acc += diff * diff * il2;
            }
            k[(i, j)] = signal * (-0.5 * acc).exp();
        }
    }
    Ok(k)
}

/// Every point's self-covariance under the stationary kernel.
pub fn kernel_diag_value(params: &KernelParams) -> f64 {
    params.signal_var()
}
