//! Autoregressive multi-step velocity prediction: predict one step ahead,
//! feed the mean back into the input window, repeat.
//!
//! Joystick commands over the horizon are taken from the log by default
//! (the user's command stream is known to the controller); `HoldLast`
//! freezes the most recent real command instead.

use crate::data::{FeatureWindow, Standardizer};
use crate::gp::{predict_fitc, SparseGp};
use crate::mlp::{mlp_forward, MlpParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RolloutError {
    #[error("horizon {horizon} exceeds the window lookahead {lookahead}")]
    HorizonExceedsWindow { horizon: usize, lookahead: usize },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("models must be a (linear, angular) pair")]
    TargetMismatch,
}

/// Which velocity a predictor estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    Linear,
    Angular,
}

/// Regressor family, also the row label family in evaluation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelFamily {
    Mlp,
    Asgp,
}

impl ModelFamily {
    pub fn key(self) -> &'static str {
        match self {
            ModelFamily::Mlp => "mlp",
            ModelFamily::Asgp => "asgp",
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            ModelFamily::Mlp => "MLP",
            ModelFamily::Asgp => "ASGP",
        }
    }
}

/// Where the horizon's joystick commands come from during rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommandSource {
    #[default]
    FutureLog,
    HoldLast,
}

/// Everything a predictor may consult for one step of the rollout.
pub struct StepContext<'a> {
    pub features: &'a [f64],
    pub step: usize,
    pub window: &'a FeatureWindow,
}

/// One-step-ahead velocity predictor driven by the rollout loop.
pub trait StepPredictor {
    fn target_kind(&self) -> TargetKind;
    fn predict(&self, ctx: &StepContext) -> Result<f64, RolloutError>;
}

/// A trained regressor with its feature/target standardizers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorModel {
    kind: PredictorKind,
    feature_std: Standardizer,
    target_std: Standardizer,
    target: TargetKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PredictorKind {
    Asgp(SparseGp),
    Mlp(MlpParams),
}

impl PredictorModel {
    pub fn new(
        kind: PredictorKind,
        feature_std: Standardizer,
        target_std: Standardizer,
        target: TargetKind,
    ) -> Result<PredictorModel, RolloutError> {
        let expected = match &kind {
            PredictorKind::Asgp(gp) => gp.params().dim(),
            PredictorKind::Mlp(mlp) => mlp.input_dim(),
        };
        if feature_std.dim() != expected {
            return Err(RolloutError::DimensionMismatch {
                expected,
                got: feature_std.dim(),
            });
        }
        if target_std.dim() != 1 {
            return Err(RolloutError::DimensionMismatch {
                expected: 1,
                got: target_std.dim(),
            });
        }
        Ok(PredictorModel {
            kind,
            feature_std,
            target_std,
            target,
        })
    }

    pub fn family(&self) -> ModelFamily {
        match self.kind {
            PredictorKind::Asgp(_) => ModelFamily::Asgp,
            PredictorKind::Mlp(_) => ModelFamily::Mlp,
        }
    }

    pub fn kind(&self) -> &PredictorKind {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.feature_std.dim()
    }

    /// Mean prediction in raw (de-standardized) units.
    pub fn predict_mean(&self, features: &[f64]) -> Result<f64, RolloutError> {
        if features.len() != self.feature_std.dim() {
            return Err(RolloutError::DimensionMismatch {
                expected: self.feature_std.dim(),
                got: features.len(),
            });
        }
        let z = self.feature_std.apply(features);
        let mean_z = match &self.kind {
            PredictorKind::Asgp(gp) => {
                predict_fitc(gp, &z)
                    .map_err(|_| RolloutError::DimensionMismatch {
                        expected: self.feature_std.dim(),
                        got: features.len(),
                    })?
                    .0
            }
            PredictorKind::Mlp(mlp) => {
                mlp_forward(mlp, &z).map_err(|_| RolloutError::DimensionMismatch {
                    expected: self.feature_std.dim(),
                    got: features.len(),
                })?
            }
        };
        Ok(self.target_std.invert_scalar(mean_z))
    }

    /// Mean and predictive variance in raw units; the MLP has no variance.
    pub fn predict_with_variance(
        &self,
        features: &[f64],
    ) -> Result<(f64, Option<f64>), RolloutError> {
        let z = self.feature_std.apply(features);
        match &self.kind {
            PredictorKind::Asgp(gp) => {
                let (mean_z, var_z) =
                    predict_fitc(gp, &z).map_err(|_| RolloutError::DimensionMismatch {
                        expected: self.feature_std.dim(),
                        got: features.len(),
                    })?;
                let scale = self.target_std.scale[0];
                Ok((
                    self.target_std.invert_scalar(mean_z),
                    Some(var_z * scale * scale),
                ))
            }
            PredictorKind::Mlp(_) => Ok((self.predict_mean(features)?, None)),
        }
    }
}

impl StepPredictor for PredictorModel {
    fn target_kind(&self) -> TargetKind {
        self.target
    }

    fn predict(&self, ctx: &StepContext) -> Result<f64, RolloutError> {
        self.predict_mean(ctx.features)
    }
}

/// Perfect predictor that returns the recorded target; the evaluation
/// harness's end-to-end sanity check.
#[derive(Debug, Clone, Copy)]
pub struct OraclePredictor {
    pub target: TargetKind,
}

impl StepPredictor for OraclePredictor {
    fn target_kind(&self) -> TargetKind {
        self.target
    }

    fn predict(&self, ctx: &StepContext) -> Result<f64, RolloutError> {
        Ok(match self.target {
            TargetKind::Linear => ctx.window.target_v[ctx.step],
            TargetKind::Angular => ctx.window.target_w[ctx.step],
        })
    }
}

/// A predicted k-step velocity trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTrajectory {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub dt: f64,
}

impl VelocityTrajectory {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Recorded target velocities over the first `k` steps of a window.
pub fn truth_trajectory(window: &FeatureWindow, k: usize, dt: f64) -> VelocityTrajectory {
    VelocityTrajectory {
        v: window.target_v[..k].to_vec(),
        w: window.target_w[..k].to_vec(),
        dt,
    }
}

/// Roll both predictors `k` steps forward. At each step the feature vector
/// is the last H `(ux, uy, v, w)` tuples, where commands beyond the window
/// history come from `commands` and velocities are the models' own previous
/// mean predictions.
pub fn rollout(
    model_v: &dyn StepPredictor,
    model_w: &dyn StepPredictor,
    window: &FeatureWindow,
    k: usize,
    dt: f64,
    commands: CommandSource,
) -> Result<VelocityTrajectory, RolloutError> {
    if model_v.target_kind() != TargetKind::Linear || model_w.target_kind() != TargetKind::Angular
    {
        return Err(RolloutError::TargetMismatch);
    }
    if k > window.lookahead() {
        return Err(RolloutError::HorizonExceedsWindow {
            horizon: k,
            lookahead: window.lookahead(),
        });
    }
    let h = window.history_len();
    let last_command = window
        .history
        .last()
        .map(|s| (s.ux, s.uy))
        .expect("window history is non-empty");

    let mut tuples: Vec<[f64; 4]> = Vec::with_capacity(h + k);
    for s in &window.history {
        tuples.push([s.ux, s.uy, s.v, s.w]);
    }
    let mut v_out = Vec::with_capacity(k);
    let mut w_out = Vec::with_capacity(k);
    let mut features = vec![0.0; 4 * h];
    for step in 0..k {
        for (i, tuple) in tuples[step..step + h].iter().enumerate() {
            features[4 * i..4 * i + 4].copy_from_slice(tuple);
        }
        let ctx = StepContext {
            features: &features,
            step,
            window,
        };
        let v_hat = model_v.predict(&ctx)?;
        let w_hat = model_w.predict(&ctx)?;
        let (ux, uy) = match commands {
            CommandSource::FutureLog => window.future_u[step],
            CommandSource::HoldLast => last_command,
        };
        tuples.push([ux, uy, v_hat, w_hat]);
        v_out.push(v_hat);
        w_out.push(w_hat);
    }
    Ok(VelocityTrajectory {
        v: v_out,
        w: w_out,
        dt,
    })
}
