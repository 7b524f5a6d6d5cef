//! Adam ascent on the log marginal likelihood over log-parameters, for
//! either the exact or the FITC objective. Returns the best iterate seen.

use super::{exact, fitc, GpError, KernelParams};
use crate::opt::Adam;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Exact,
    Fitc,
}

#[derive(Debug, Clone)]
pub struct HyperOptConfig {
    pub steps: usize,
    pub lr: f64,
    pub objective: ObjectiveKind,
}

impl Default for HyperOptConfig {
    fn default() -> Self {
        HyperOptConfig {
            steps: 200,
            lr: 0.05,
            objective: ObjectiveKind::Fitc,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HyperOptOutcome {
    pub params: KernelParams,
    pub best_lml: f64,
    /// Best objective seen after each evaluation; non-decreasing.
    pub best_trace: Vec<f64>,
}

/// Maximize the chosen marginal likelihood from `init`, keeping the iterate
/// with the best objective. The inducing set `z` is only consulted for the
/// FITC objective.
pub fn optimize_hyperparams(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    z: &DMatrix<f64>,
    init: &KernelParams,
    config: &HyperOptConfig,
) -> Result<HyperOptOutcome, GpError> {
    let objective = |p: &KernelParams| -> Result<(f64, Vec<f64>), GpError> {
        match config.objective {
            ObjectiveKind::Exact => exact::log_marginal_and_grad(x, y, p),
            ObjectiveKind::Fitc => fitc::fitc_lml_and_grad(x, y, z, p),
        }
    };

    let mut logs = init.to_log_vec();
    let mut adam = Adam::new(config.lr, logs.len());
    let mut best_logs = logs.clone();
    let mut best_lml = f64::NEG_INFINITY;
    let mut best_trace = Vec::with_capacity(config.steps + 1);

    for step in 0..=config.steps {
        let params = KernelParams::from_log_vec(&logs);
        let (lml, grad) = objective(&params)?;
        if !lml.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(GpError::NonFiniteObjective(step));
        }
        if lml > best_lml {
            best_lml = lml;
            best_logs = logs.clone();
        }
        best_trace.push(best_lml);
        if step == config.steps {
            break;
        }
        // ascent: descend the negated gradient
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        adam.step(&mut logs, &neg);
    }

    Ok(HyperOptOutcome {
        params: KernelParams::from_log_vec(&best_logs),
        best_lml,
        best_trace,
    })
}
