//! Single-hidden-layer tanh regressor with hand-rolled backprop and Adam
//! training, the comparison baseline for the sparse-GP predictor.

use crate::opt::Adam;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
}

/// Network weights: `out = w2 . tanh(w1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DVector<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Seeded init: weights uniform in +/- 1/sqrt(fan-in), biases zero.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = 1.0 / (input_dim as f64).sqrt();
        let w1 = DMatrix::from_fn(hidden, input_dim, |_, _| rng.random_range(-bound1..bound1));
        let bound2 = 1.0 / (hidden as f64).sqrt();
        let w2 = DVector::from_fn(hidden, |_, _| rng.random_range(-bound2..bound2));
        MlpParams {
            w1,
            b1: DVector::zeros(hidden),
            w2,
            b2: 0.0,
        }
    }

    fn flat_len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.push(self.b2);
        out
    }

    fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for v in self.w1.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.b1.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.w2.iter_mut() {
            *v = it.next().unwrap();
        }
        self.b2 = it.next().unwrap();
    }
}

/// Gradient of the mean-squared-error loss, same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DVector<f64>,
    pub b2: f64,
}

impl MlpGrad {
    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + 1);
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.push(self.b2);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 64,
            lr: 1e-3,
            epochs: 200,
            batch: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpTrainOutcome {
    pub params: MlpParams,
    pub best_mse: f64,
    /// Best epoch-end MSE seen so far, one entry per evaluation.
    pub mse_trace: Vec<f64>,
}

pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<f64, MlpError> {
    if x.len() != params.input_dim() {
        return Err(MlpError::DimensionMismatch {
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    let xv = DVector::from_row_slice(x);
    let h = (&params.w1 * xv + &params.b1).map(f64::tanh);
    Ok(params.w2.dot(&h) + params.b2)
}

/// Loss `1/2 mean (pred - target)^2` over a batch (rows of `xs`).
pub fn mlp_loss(params: &MlpParams, xs: &DMatrix<f64>, targets: &DVector<f64>) -> f64 {
    let (preds, _) = forward_batch(params, xs);
    let n = targets.len() as f64;
    0.5 * (&preds - targets).norm_squared() / n
}

fn forward_batch(params: &MlpParams, xs: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let b = xs.nrows();
    let mut a = &params.w1 * xs.transpose(); // hidden x B
    for mut col in a.column_iter_mut() {
        col += &params.b1;
    }
    let h = a.map(f64::tanh);
    let preds = DVector::from_fn(b, |i, _| params.w2.dot(&h.column(i).into_owned()) + params.b2);
    (preds, h)
}

/// Exact gradient of `1/2 mean (pred - target)^2` over all parameters.
pub fn mlp_grad(
    params: &MlpParams,
    xs: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> Result<MlpGrad, MlpError> {
    if xs.nrows() == 0 {
        return Err(MlpError::EmptyBatch);
    }
    if xs.ncols() != params.input_dim() {
        return Err(MlpError::DimensionMismatch {
            expected: params.input_dim(),
            got: xs.ncols(),
        });
    }
    if xs.nrows() != targets.len() {
        return Err(MlpError::DimensionMismatch {
            expected: xs.nrows(),
            got: targets.len(),
        });
    }
    let b = xs.nrows() as f64;
    let (preds, h) = forward_batch(params, xs);
    let residuals = (&preds - targets) / b;

    let gb2 = residuals.sum();
    let gw2 = &h * &residuals;
    // da[:, i] = residual_i * w2 .* (1 - h_i^2)
    let mut da = &params.w2 * residuals.transpose(); // hidden x B
    for (j, mut col) in da.column_iter_mut().enumerate() {
        for (k, v) in col.iter_mut().enumerate() {
            *v *= 1.0 - h[(k, j)] * h[(k, j)];
        }
    }
    let gb1 = DVector::from_fn(params.hidden_dim(), |k, _| da.row(k).sum());
    let gw1 = &da * xs;
    Ok(MlpGrad {
        w1: gw1,
        b1: gb1,
        w2: gw2,
        b2: gb2,
    })
}

/// Adam training with seeded shuffling; keeps the epoch-end parameters with
/// the lowest full-set MSE (the initialization counts as epoch zero).
pub fn mlp_train(
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
    config: &MlpConfig,
) -> Result<MlpTrainOutcome, MlpError> {
    if features.nrows() == 0 {
        return Err(MlpError::EmptyBatch);
    }
    if features.nrows() != targets.len() {
        return Err(MlpError::DimensionMismatch {
            expected: features.nrows(),
            got: targets.len(),
        });
    }
    let n = features.nrows();
    let mut params = MlpParams::init(features.ncols(), config.hidden, config.seed);
    let mut adam = Adam::new(config.lr, params.flat_len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);

    let full_mse = |p: &MlpParams| -> f64 {
        let (preds, _) = forward_batch(p, features);
        (&preds - targets).norm_squared() / n as f64
    };

    let mut best_params = params.clone();
    let mut best_mse = full_mse(&params);
    let mut mse_trace = vec![best_mse];
    let mut indices: Vec<usize> = (0..n).collect();
    let batch = config.batch.max(1);

    for epoch in 1..=config.epochs {
        shuffle(&mut indices, &mut rng);
        for chunk in indices.chunks(batch) {
            let xs = DMatrix::from_fn(chunk.len(), features.ncols(), |i, j| {
                features[(chunk[i], j)]
            });
            let ts = DVector::from_fn(chunk.len(), |i, _| targets[chunk[i]]);
            let grad = mlp_grad(&params, &xs, &ts)?;
            let mut flat = params.to_flat();
            adam.step(&mut flat, &grad.to_flat());
            params.assign_from_flat(&flat);
        }
        let mse = full_mse(&params);
        if !mse.is_finite() {
            return Err(MlpError::NonFiniteLoss(epoch));
        }
        if mse < best_mse {
            best_mse = mse;
            best_params = params.clone();
        }
        mse_trace.push(best_mse);
    }

    Ok(MlpTrainOutcome {
        params: best_params,
        best_mse,
        mse_trace,
    })
}

fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}
