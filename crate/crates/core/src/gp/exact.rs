//! Exact Gaussian-process posterior, used directly on small problems and as
//! the equivalence oracle for the sparse posterior.

use super::{check_dim, cholesky_with_jitter, kernel_matrix, GpError, KernelParams};
use nalgebra::{DMatrix, DVector};

/// Fitted exact GP: training inputs, lower Cholesky factor of
/// `K + noise_var I`, and the precomputed weight vector `alpha`.
#[derive(Debug, Clone)]
pub struct ExactGp {
    x: DMatrix<f64>,
    params: KernelParams,
    l: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl ExactGp {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn train_len(&self) -> usize {
        self.x.nrows()
    }
}

/// Factor `K + noise_var I` (with jitter escalation) and cache `alpha`.
pub fn fit_exact(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &KernelParams,
) -> Result<ExactGp, GpError> {
    check_dim(params.dim(), x.ncols())?;
    check_dim(x.nrows(), y.len())?;
    let n = x.nrows();
    let mut ky = kernel_matrix(params, x, x)?;
    let noise = params.noise_var();
    for i in 0..n {
        ky[(i, i)] += noise;
    }
    let (l, _) = cholesky_with_jitter(&ky)?;
    let tmp = l
        .solve_lower_triangular(y)
        .ok_or(GpError::NotPositiveDefinite)?;
    let alpha = l
        .tr_solve_lower_triangular(&tmp)
        .ok_or(GpError::NotPositiveDefinite)?;
    Ok(ExactGp {
        x: x.clone(),
        params: params.clone(),
        l,
        alpha,
    })
}

/// Predictive mean and (non-negative) latent variance at one input row.
pub fn predict_exact(gp: &ExactGp, x_star: &[f64]) -> Result<(f64, f64), GpError> {
    check_dim(gp.params.dim(), x_star.len())?;
    let xs = DMatrix::from_row_slice(1, x_star.len(), x_star);
    let k_star = kernel_matrix(&gp.params, &gp.x, &xs)?; // n x 1
    let mean = gp.alpha.dot(&k_star.column(0).into_owned());
    let v = gp
        .l
        .solve_lower_triangular(&k_star)
        .ok_or(GpError::NotPositiveDefinite)?;
    let var = gp.params.signal_var() - v.column(0).norm_squared();
    Ok((mean, var.max(0.0)))
}

/// Log marginal likelihood and its gradient with respect to the
/// log-parameters `[log signal_var, log l_1..l_D, log noise_var]`.
pub fn log_marginal_and_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &KernelParams,
) -> Result<(f64, Vec<f64>), GpError> {
    check_dim(params.dim(), x.ncols())?;
    check_dim(x.nrows(), y.len())?;
    let n = x.nrows();
    let dim = params.dim();
    let k = kernel_matrix(params, x, x)?;
    let noise = params.noise_var();
    let mut ky = k.clone();
    for i in 0..n {
        ky[(i, i)] += noise;
    }
    let (l, _) = cholesky_with_jitter(&ky)?;
    let tmp = l
        .solve_lower_triangular(y)
        .ok_or(GpError::NotPositiveDefinite)?;
    let alpha = l
        .tr_solve_lower_triangular(&tmp)
        .ok_or(GpError::NotPositiveDefinite)?;
    let log_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * y.dot(&alpha)
        - 0.5 * log_det
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // trace term: A = alpha alpha^T - Ky^{-1}
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(GpError::NotPositiveDefinite)?;
    let ky_inv = l_inv.transpose() * &l_inv;
    let a_mat = &alpha * alpha.transpose() - ky_inv;

    let mut grad = vec![0.0; dim + 2];
    // d Ky / d log signal_var = K
    grad[0] = 0.5 * frobenius_dot(&a_mat, &k);
    // d Ky / d log l_d = K .* d2_d / l_d^2
    for d in 0..dim {
        let inv_l2 = {
            let l_d = params.lengthscale(d);
            1.0 / (l_d * l_d)
        };
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = x[(i, d)] - x[(j, d)];
                acc += a_mat[(i, j)] * k[(i, j)] * diff * diff;
            }
        }
        grad[1 + d] = 0.5 * acc * inv_l2;
    }
    // d Ky / d log noise_var = noise_var I
    grad[dim + 1] = 0.5 * noise * a_mat.trace();
    Ok((lml, grad))
}

fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_point_gp() -> ExactGp {
        let params = KernelParams::new(1.0, &[1.0], 1.0).unwrap();
        fit_exact(&dmatrix![0.0], &dvector![1.0], &params).unwrap()
    }

    #[test]
    fn one_point_alpha_closed_form() {
        let gp = one_point_gp();
        assert!((gp.alpha()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_succeed_via_jitter() {
        let params = KernelParams::new(1.0, &[1.0], 1e-9).unwrap();
        let x = DMatrix::from_row_slice(3, 1, &[0.4, 0.4, 0.4]);
        let y = dvector![1.0, 1.0, 1.0];
        let gp = fit_exact(&x, &y, &params).unwrap();
        let (mean, var) = predict_exact(&gp, &[0.4]).unwrap();
        assert!(mean.is_finite() && var.is_finite());
    }

    #[test]
    fn zero_targets_give_zero_alpha() {
        let params = KernelParams::new(1.0, &[1.0], 0.1).unwrap();
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.5, 1.0, 1.5]);
        let gp = fit_exact(&x, &DVector::zeros(4), &params).unwrap();
        assert!(gp.alpha().iter().all(|&a| a.abs() < 1e-14));
    }

    #[test]
    fn one_point_prediction_closed_form() {
        let gp = one_point_gp();
        let (mean, var) = predict_exact(&gp, &[0.0]).unwrap();
        assert!((mean - 0.5).abs() < 1e-9);
        assert!((var - 0.5).abs() < 1e-9);
    }

    #[test]
    fn far_inputs_revert_to_the_prior() {
        let params = KernelParams::new(1.7, &[1.0], 0.1).unwrap();
        let x = DMatrix::from_row_slice(3, 1, &[-0.5, 0.0, 0.5]);
        let y = dvector![0.3, -0.2, 0.8];
        let gp = fit_exact(&x, &y, &params).unwrap();
        let (mean, var) = predict_exact(&gp, &[25.0]).unwrap();
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.7).abs() < 1e-6);
    }

    #[test]
    fn tiny_noise_interpolates_training_targets() {
        let params = KernelParams::new(1.0, &[1.0], 1e-10).unwrap();
        let x = DMatrix::from_row_slice(5, 1, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let y = dvector![0.2, -0.4, 0.9, 0.1, -0.6];
        let gp = fit_exact(&x, &y, &params).unwrap();
        for i in 0..5 {
            let (mean, _) = predict_exact(&gp, &[x[(i, 0)]]).unwrap();
            assert!((mean - y[i]).abs() < 1e-4, "point {i}: {mean} vs {}", y[i]);
        }
    }

    #[test]
    fn alpha_solves_the_system() {
        let params = KernelParams::new(1.3, &[0.8, 1.2], 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(12, 2, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let gp = fit_exact(&x, &y, &params).unwrap();
        let mut ky = kernel_matrix(&params, &x, &x).unwrap();
        for i in 0..12 {
            ky[(i, i)] += params.noise_var();
        }
        let residual = (&ky * gp.alpha() - &y).norm();
        assert!(residual < 1e-8, "residual {residual}");
    }

    #[test]
    fn one_point_lml_closed_form() {
        let params = KernelParams::new(1.0, &[1.0], 1.0).unwrap();
        let (lml, _) = log_marginal_and_grad(&dmatrix![0.0], &dvector![1.0], &params).unwrap();
        let expected = -0.25 - 0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((lml - expected).abs() < 1e-9);
        assert!((lml - (-1.51551)).abs() < 1e-5);
    }

    #[test]
    fn zero_targets_drop_the_data_fit_term() {
        let params = KernelParams::new(1.0, &[1.0], 0.3).unwrap();
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.4, 0.9, 1.7]);
        let y = dvector![0.5, -0.3, 0.2, 0.4];
        let (with_data, _) = log_marginal_and_grad(&x, &y, &params).unwrap();
        let (without, _) = log_marginal_and_grad(&x, &DVector::zeros(4), &params).unwrap();
        assert!(without >= with_data);
        let mut ky = kernel_matrix(&params, &x, &x).unwrap();
        for i in 0..4 {
            ky[(i, i)] += params.noise_var();
        }
        let l = ky.cholesky().unwrap().unpack();
        let log_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let expected = -0.5 * log_det - 2.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((without - expected).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let dim = 1 + trial % 3;
            let x = DMatrix::from_fn(10, dim, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(10, |_, _| rng.random_range(-1.5..1.5));
            let params = KernelParams::new(
                rng.random_range(0.5..2.0),
                &(0..dim)
                    .map(|_| rng.random_range(0.7..1.8))
                    .collect::<Vec<_>>(),
                rng.random_range(0.05..0.5),
            )
            .unwrap();
            let (_, grad) = log_marginal_and_grad(&x, &y, &params).unwrap();
            let logs = params.to_log_vec();
            let h = 1e-5;
            for (i, &g) in grad.iter().enumerate() {
                let mut plus = logs.clone();
                plus[i] += h;
                let mut minus = logs.clone();
                minus[i] -= h;
                let (lp, _) =
                    log_marginal_and_grad(&x, &y, &KernelParams::from_log_vec(&plus)).unwrap();
                let (lm, _) =
                    log_marginal_and_grad(&x, &y, &KernelParams::from_log_vec(&minus)).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let rel = (g - fd).abs() / (g.abs() + fd.abs() + 1e-3);
                assert!(rel < 1e-4, "trial {trial} param {i}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn variance_is_clamped_and_bounded() {
        let params = KernelParams::new(1.2, &[0.9], 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(15, 1, |_, _| rng.random_range(-3.0..3.0));
        let y = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let gp = fit_exact(&x, &y, &params).unwrap();
        for _ in 0..50 {
            let (_, var) = predict_exact(&gp, &[rng.random_range(-4.0..4.0)]).unwrap();
            assert!(var >= 0.0);
            assert!(var <= params.signal_var() + params.noise_var() + 1e-12);
        }
    }
}
