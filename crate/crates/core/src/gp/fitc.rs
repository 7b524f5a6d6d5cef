//! Sparse GP posterior over inducing points (FITC): low-rank covariance
//! through M inducing inputs plus a diagonal correction, with the matching
//! marginal likelihood and its analytic gradient.
//!
//! With the inducing set equal to the training set the posterior reproduces
//! the exact GP, which the test suite uses as an oracle.

use super::{check_dim, cholesky_with_jitter, kernel_matrix, GpError, KernelParams};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

/// Fixed fraction of the signal variance added to the inducing covariance
/// diagonal so gradients stay consistent with the factorized matrix.
pub const KMM_JITTER_FRAC: f64 = 1e-8;

/// Fitted FITC posterior. Holds the inducing inputs plus the cached
/// factorizations needed for prediction; training data is not retained.
#[derive(Debug, Serialize, Deserialize)]
pub struct SparseGp {
    z: DMatrix<f64>,
    params: KernelParams,
    l_mm: DMatrix<f64>,
    l_a: DMatrix<f64>,
    w: DVector<f64>,
    lml: f64,
    #[serde(skip)]
    variance_clamps: AtomicU64,
}

impl Clone for SparseGp {
    fn clone(&self) -> Self {
        SparseGp {
            z: self.z.clone(),
            params: self.params.clone(),
            l_mm: self.l_mm.clone(),
            l_a: self.l_a.clone(),
            w: self.w.clone(),
            lml: self.lml,
            variance_clamps: AtomicU64::new(self.variance_clamps.load(Ordering::Relaxed)),
        }
    }
}

impl SparseGp {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn inducing(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn inducing_count(&self) -> usize {
        self.z.nrows()
    }

    /// Marginal likelihood of the training data at fit time.
    pub fn lml(&self) -> f64 {
        self.lml
    }

    /// How many predictions needed their variance clamped up to zero.
    pub fn variance_clamps(&self) -> u64 {
        self.variance_clamps.load(Ordering::Relaxed)
    }
}

/// Shared factorization work for fitting, likelihood, and gradients.
struct FitcCore {
    k_mm: DMatrix<f64>, // includes all diagonal jitter actually factorized
    k_mn: DMatrix<f64>,
    l_mm: DMatrix<f64>,
    v: DMatrix<f64>,
    lambda: DVector<f64>,
    l_a: DMatrix<f64>,
    vs: DMatrix<f64>,
    y_tilde: DVector<f64>,
    b: DVector<f64>,
    lml: f64,
}

fn fitc_core(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    z: &DMatrix<f64>,
    params: &KernelParams,
) -> Result<FitcCore, GpError> {
    let n = x.nrows();
    let m = z.nrows();
    if m == 0 || n == 0 {
        return Err(GpError::TooFewPoints { needed: 1, got: 0 });
    }
    if m > n {
        return Err(GpError::TooFewPoints { needed: m, got: n });
    }
    check_dim(params.dim(), x.ncols())?;
    check_dim(params.dim(), z.ncols())?;
    check_dim(n, y.len())?;

    let mut k_mm = kernel_matrix(params, z, z)?;
    let base = KMM_JITTER_FRAC * params.signal_var();
    for i in 0..m {
        k_mm[(i, i)] += base;
    }
    let (l_mm, extra) = cholesky_with_jitter(&k_mm)?;
    if extra != 0.0 {
        for i in 0..m {
            k_mm[(i, i)] += extra;
        }
    }
    let k_mn = kernel_matrix(params, z, x)?;
    let v = l_mm
        .solve_lower_triangular(&k_mn)
        .ok_or(GpError::NotPositiveDefinite)?;

    let kdiag = params.signal_var();
    let noise = params.noise_var();
    let mut lambda = DVector::zeros(n);
    for j in 0..n {
        let q = v.column(j).norm_squared();
        lambda[j] = (kdiag - q).max(0.0) + noise;
    }

    let mut vs = v.clone();
    let mut y_tilde = DVector::zeros(n);
    for j in 0..n {
        let s = 1.0 / lambda[j].sqrt();
        vs.column_mut(j).scale_mut(s);
        y_tilde[j] = y[j] * s;
    }
    let a = DMatrix::identity(m, m) + &vs * vs.transpose();
    let (l_a, _) = cholesky_with_jitter(&a)?;
    let vs_y = &vs * &y_tilde;
    let b = l_a
        .solve_lower_triangular(&vs_y)
        .ok_or(GpError::NotPositiveDefinite)?;

    let log_lambda: f64 = lambda.iter().map(|l| l.ln()).sum();
    let log_det_a: f64 = l_a.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let lml = -0.5
        * (log_lambda + log_det_a + y_tilde.norm_squared() - b.norm_squared()
            + n as f64 * (2.0 * std::f64::consts::PI).ln());

    Ok(FitcCore {
        k_mm,
        k_mn,
        l_mm,
        v,
        lambda,
        l_a,
        vs,
        y_tilde,
        b,
        lml,
    })
}

/// Build the FITC posterior caches for prediction.
pub fn fit_fitc(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    z: &DMatrix<f64>,
    params: &KernelParams,
) -> Result<SparseGp, GpError> {
    let core = fitc_core(x, y, z, params)?;
    let w = core
        .l_a
        .tr_solve_lower_triangular(&core.b)
        .ok_or(GpError::NotPositiveDefinite)?;
    Ok(SparseGp {
        z: z.clone(),
        params: params.clone(),
        l_mm: core.l_mm,
        l_a: core.l_a,
        w,
        lml: core.lml,
        variance_clamps: AtomicU64::new(0),
    })
}

/// FITC predictive mean and variance (clamped at zero) at one input row.
pub fn predict_fitc(sgp: &SparseGp, x_star: &[f64]) -> Result<(f64, f64), GpError> {
    check_dim(sgp.params.dim(), x_star.len())?;
    let xs = DMatrix::from_row_slice(1, x_star.len(), x_star);
    let k_zs = kernel_matrix(&sgp.params, &sgp.z, &xs)?; // M x 1
    let u1 = sgp
        .l_mm
        .solve_lower_triangular(&k_zs)
        .ok_or(GpError::NotPositiveDefinite)?;
    let mean = sgp.w.dot(&u1.column(0).into_owned());
    let u2 = sgp
        .l_a
        .solve_lower_triangular(&u1)
        .ok_or(GpError::NotPositiveDefinite)?;
    let var = sgp.params.signal_var() - u1.column(0).norm_squared() + u2.column(0).norm_squared();
    if var < 0.0 {
        sgp.variance_clamps.fetch_add(1, Ordering::Relaxed);
    }
    Ok((mean, var.max(0.0)))
}

/// FITC log marginal likelihood and its gradient over the log-parameters
/// `[log signal_var, log l_1..l_D, log noise_var]`.
pub fn fitc_lml_and_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    z: &DMatrix<f64>,
    params: &KernelParams,
) -> Result<(f64, Vec<f64>), GpError> {
    let core = fitc_core(x, y, z, params)?;
    let n = x.nrows();
    let dim = params.dim();
    let noise = params.noise_var();
    let signal = params.signal_var();

    let ip = DVector::from_fn(n, |j, _| 1.0 / core.lambda[j]);
    let ip_y = DVector::from_fn(n, |j, _| ip[j] * y[j]);

    // r = G^{-1} y with G = Q_ff + Lambda
    let c = &core.v * &ip_y;
    let d = solve_spd(&core.l_a, &c)?;
    let vt_d = core.v.transpose() * &d;
    let r = DVector::from_fn(n, |j, _| ip_y[j] - ip[j] * vt_d[j]);

    // diag(G^{-1}) and h = r.^2 - diag(G^{-1})
    let u = solve_spd_mat(&core.l_a, &core.v)?;
    let mut h = DVector::zeros(n);
    for j in 0..n {
        let vu = core.v.column(j).dot(&u.column(j));
        let diag_g = ip[j] - ip[j] * ip[j] * vu;
        h[j] = r[j] * r[j] - diag_g;
    }

    // E = Kmm^{-1} Kmn, and the contraction targets Y (MxN) and W (MxM):
    // dL/dtheta = 1/2 (<dKmn, Y> + <dKmm, W> + h' d(kdiag) + dnoise * sum h)
    let e = core
        .l_mm
        .tr_solve_lower_triangular(&core.v)
        .ok_or(GpError::NotPositiveDefinite)?;
    let e_r = &e * &r;

    let mut f1 = e.clone();
    let mut u_ip = u.clone();
    for j in 0..n {
        f1.column_mut(j).scale_mut(ip[j]);
        u_ip.column_mut(j).scale_mut(ip[j]);
    }
    let t = &f1 * core.v.transpose();
    let s = &f1 - &t * &u_ip;
    let c_mat = &s * e.transpose();
    let mut e_h = e.clone();
    for j in 0..n {
        e_h.column_mut(j).scale_mut(h[j]);
    }

    let y_mn = 2.0 * (&e_r * r.transpose() - &s - &e_h);
    let w_mm = -(&e_r * e_r.transpose() - &c_mat - &e_h * e.transpose());

    let sum_h: f64 = h.sum();
    let mut grad = vec![0.0; dim + 2];
    grad[0] = 0.5
        * (frob(&core.k_mn, &y_mn) + frob(&core.k_mm, &w_mm) + signal * sum_h);

    // lengthscales via the expanded squared-distance contraction
    let p = core.k_mn.component_mul(&y_mn);
    let p2 = core.k_mm.component_mul(&w_mm);
    let px = &p * x; // M x D
    let p2z = &p2 * z; // M x D
    let rp = row_sums(&p);
    let cp = col_sums(&p);
    let rp2 = row_sums(&p2);
    let cp2 = col_sums(&p2);
    let m = z.nrows();
    for dcol in 0..dim {
        let l_d = params.lengthscale(dcol);
        let inv_l2 = 1.0 / (l_d * l_d);
        let mut acc = 0.0;
        for i in 0..m {
            let zi = z[(i, dcol)];
            acc += zi * zi * (rp[i] + rp2[i]);
            acc -= 2.0 * zi * (px[(i, dcol)] + p2z[(i, dcol)]);
            acc += zi * zi * cp2[i];
        }
        for j in 0..n {
            let xj = x[(j, dcol)];
            acc += xj * xj * cp[j];
        }
        grad[1 + dcol] = 0.5 * acc * inv_l2;
    }

    grad[dim + 1] = 0.5 * noise * sum_h;
    Ok((core.lml, grad))
}

fn solve_spd(l: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, GpError> {
    let t = l
        .solve_lower_triangular(b)
        .ok_or(GpError::NotPositiveDefinite)?;
    l.tr_solve_lower_triangular(&t)
        .ok_or(GpError::NotPositiveDefinite)
}

fn solve_spd_mat(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    let t = l
        .solve_lower_triangular(b)
        .ok_or(GpError::NotPositiveDefinite)?;
    l.tr_solve_lower_triangular(&t)
        .ok_or(GpError::NotPositiveDefinite)
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |i, _| m.row(i).sum())
}

fn col_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{fit_exact, predict_exact};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(
        seed: u64,
        n: usize,
        dim: usize,
    ) -> (DMatrix<f64>, DVector<f64>, KernelParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, dim, |_, _| rng.random_range(-3.0..3.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
        let params = KernelParams::new(
            rng.random_range(0.6..1.6),
            &(0..dim)
                .map(|_| rng.random_range(0.9..1.8))
                .collect::<Vec<_>>(),
            rng.random_range(0.1..0.4),
        )
        .unwrap();
        (x, y, params)
    }

    #[test]
    fn full_inducing_set_matches_exact_gp() {
        let (x, y, params) = random_problem(5, 30, 2);
        let exact = fit_exact(&x, &y, &params).unwrap();
        let sparse = fit_fitc(&x, &y, &x, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let star = [rng.random_range(-3.5..3.5), rng.random_range(-3.5..3.5)];
            let (em, ev) = predict_exact(&exact, &star).unwrap();
            let (fm, fv) = predict_fitc(&sparse, &star).unwrap();
            assert!((em - fm).abs() < 1e-6, "mean {em} vs {fm}");
            assert!((ev - fv).abs() < 1e-5, "variance {ev} vs {fv}");
        }
    }

    #[test]
    fn single_inducing_point_closed_form() {
        // Two symmetric points, one inducing point at the origin: the
        // rank-1 algebra collapses to scalars.
        let (sf2, len, sn2, a) = (1.0, 1.0, 0.1, 1.0);
        let params = KernelParams::new(sf2, &[len], sn2).unwrap();
        let x = dmatrix![-a; a];
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let z = dmatrix![0.0];
        let sparse = fit_fitc(&x, &y, &z, &params).unwrap();
        let (mean, _) = predict_fitc(&sparse, &[0.0]).unwrap();

        let q = sf2 * (-a * a / (2.0 * len * len)).exp();
        let lambda = sf2 - q * q / sf2 + sn2;
        let sigma_m = sf2 + 2.0 * q * q / lambda;
        let expected = sf2 * q * (y[0] + y[1]) / (lambda * sigma_m);
        assert!((mean - expected).abs() < 1e-6, "{mean} vs {expected}");
    }

    #[test]
    fn zero_targets_give_zero_mean() {
        let (x, _, params) = random_problem(7, 20, 1);
        let z = x.rows(0, 5).into_owned();
        let sparse = fit_fitc(&x, &DVector::zeros(20), &z, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let (mean, _) = predict_fitc(&sparse, &[rng.random_range(-3.0..3.0)]).unwrap();
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn far_inputs_revert_to_the_prior() {
        let (x, y, params) = random_problem(9, 25, 1);
        let z = x.rows(0, 8).into_owned();
        let sparse = fit_fitc(&x, &y, &z, &params).unwrap();
        let (mean, var) = predict_fitc(&sparse, &[40.0]).unwrap();
        assert!(mean.abs() < 1e-6);
        assert!((var - params.signal_var()).abs() < 1e-6);
    }

    #[test]
    fn prediction_is_deterministic() {
        let (x, y, params) = random_problem(11, 25, 2);
        let z = x.rows(0, 6).into_owned();
        let sparse = fit_fitc(&x, &y, &z, &params).unwrap();
        let a = predict_fitc(&sparse, &[0.3, -0.7]).unwrap();
        let b = predict_fitc(&sparse, &[0.3, -0.7]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_more_inducing_than_training_points() {
        let (x, y, params) = random_problem(13, 5, 1);
        let z = DMatrix::from_fn(6, 1, |i, _| i as f64);
        assert!(matches!(
            fit_fitc(&x, &y, &z, &params),
            Err(GpError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        for trial in 0..20 {
            let dim = 1 + (trial as usize) % 3;
            let (x, y, params) = random_problem(100 + trial, 10, dim);
            let m = 4;
            let z = x.rows(0, m).into_owned();
            let (_, grad) = fitc_lml_and_grad(&x, &y, &z, &params).unwrap();
            let logs = params.to_log_vec();
            let h = 1e-5;
            for (i, &g) in grad.iter().enumerate() {
                let mut plus = logs.clone();
                plus[i] += h;
                let mut minus = logs.clone();
                minus[i] -= h;
                let (lp, _) =
                    fitc_lml_and_grad(&x, &y, &z, &KernelParams::from_log_vec(&plus)).unwrap();
                let (lm, _) =
                    fitc_lml_and_grad(&x, &y, &z, &KernelParams::from_log_vec(&minus)).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let rel = (g - fd).abs() / (g.abs() + fd.abs() + 1e-3);
                assert!(rel < 1e-4, "trial {trial} param {i}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn lml_matches_exact_when_inducing_is_full() {
        let (x, y, params) = random_problem(15, 20, 2);
        let (exact_lml, _) = crate::gp::log_marginal_and_grad(&x, &y, &params).unwrap();
        let (fitc_lml, _) = fitc_lml_and_grad(&x, &y, &x, &params).unwrap();
        assert!(
            (exact_lml - fitc_lml).abs() < 1e-5 * exact_lml.abs().max(1.0),
            "{exact_lml} vs {fitc_lml}"
        );
    }

    #[test]
    fn serialization_round_trips() {
        let (x, y, params) = random_problem(17, 15, 2);
        let z = x.rows(0, 4).into_owned();
        let sparse = fit_fitc(&x, &y, &z, &params).unwrap();
        let json = serde_json::to_string(&sparse).unwrap();
        let back: SparseGp = serde_json::from_str(&json).unwrap();
        let a = predict_fitc(&sparse, &[0.1, 0.2]).unwrap();
        let b = predict_fitc(&back, &[0.1, 0.2]).unwrap();
        assert_eq!(a, b);
    }
}
