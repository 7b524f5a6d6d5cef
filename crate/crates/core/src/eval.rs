//! Success-rate metric, cross train/test evaluation matrix, and report
//! rendering.
//!
//! Every test window is rolled out to the horizon, integrated to a pose
//! trajectory from the identity pose, and compared against the integral of
//! its recorded velocities. A window counts as a success when the planar
//! position error at the horizon is within the threshold.

use crate::data::{format_sig, FeatureWindow};
use crate::pose::{integrate_trajectory, position_error, Pose};
use crate::rollout::{rollout, truth_trajectory, CommandSource, ModelFamily, RolloutError,
                     StepPredictor};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("no test windows")]
    NoWindows,
    #[error("missing input: {0}")]
    IncompleteInputs(String),
    #[error("matrix has no complete horizon {0}")]
    IncompleteMatrix(usize),
    #[error("horizon {horizon} exceeds the windows' lookahead {lookahead}")]
    HorizonExceedsLookahead { horizon: usize, lookahead: usize },
    #[error(transparent)]
    Rollout(#[from] RolloutError),
}

/// Training-set tag, in the report's column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TrainTag {
    Tile,
    Carpet,
    Both,
}

impl TrainTag {
    pub const ALL: [TrainTag; 3] = [TrainTag::Tile, TrainTag::Carpet, TrainTag::Both];

    pub fn key(self) -> &'static str {
        match self {
            TrainTag::Tile => "tile",
            TrainTag::Carpet => "carpet",
            TrainTag::Both => "both",
        }
    }

    pub fn from_key(key: &str) -> Option<TrainTag> {
        Self::ALL.into_iter().find(|t| t.key() == key)
    }

    pub fn header(self) -> &'static str {
        match self {
            TrainTag::Tile => "Tile",
            TrainTag::Carpet => "Carpet",
            TrainTag::Both => "Both (1:1)",
        }
    }
}

impl fmt::Display for TrainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

/// Test-set tag, in the report's row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TestTag {
    Tile,
    Carpet,
    Hybrid,
}

impl TestTag {
    pub const ALL: [TestTag; 3] = [TestTag::Tile, TestTag::Carpet, TestTag::Hybrid];

    pub fn key(self) -> &'static str {
        match self {
            TestTag::Tile => "tile",
            TestTag::Carpet => "carpet",
            TestTag::Hybrid => "hybrid",
        }
    }

    pub fn from_key(key: &str) -> Option<TestTag> {
        Self::ALL.into_iter().find(|t| t.key() == key)
    }

    pub fn header(self) -> &'static str {
        match self {
            TestTag::Tile => "Tile",
            TestTag::Carpet => "Carpet",
            TestTag::Hybrid => "Hybrid",
        }
    }
}

impl fmt::Display for TestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

/// Whether a window is scored at the final horizon step or by the worst
/// error anywhere along the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMode {
    #[default]
    FinalStep,
    MaxOverPath,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Success threshold on planar position error, meters.
    pub threshold_m: f64,
    /// Horizons in steps; 5/7/10 steps are 1000/1400/2000 ms at 5 Hz.
    pub horizons: Vec<usize>,
    pub history: usize,
    pub error_mode: ErrorMode,
    pub commands: CommandSource,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold_m: 0.10,
            horizons: vec![5, 7, 10],
            history: 5,
            error_mode: ErrorMode::FinalStep,
            commands: CommandSource::FutureLog,
        }
    }
}

/// One cell of the cross matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCell {
    pub train: TrainTag,
    pub test: TestTag,
    pub model: ModelFamily,
    pub horizon_steps: usize,
    pub success_pct: f64,
    pub n_success: usize,
    pub n_cases: usize,
}

impl EvalCell {
    pub fn new(
        train: TrainTag,
        test: TestTag,
        model: ModelFamily,
        horizon_steps: usize,
        n_success: usize,
        n_cases: usize,
    ) -> EvalCell {
        EvalCell {
            train,
            test,
            model,
            horizon_steps,
            success_pct: round2(100.0 * n_success as f64 / n_cases as f64),
            n_success,
            n_cases,
        }
    }
}

/// Complete train x test x model x horizon success-rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    pub cells: Vec<EvalCell>,
    pub horizons: Vec<usize>,
    pub threshold_m: f64,
    pub dt: f64,
}

impl EvalMatrix {
    pub fn lookup(
        &self,
        train: TrainTag,
        test: TestTag,
        model: ModelFamily,
        horizon_steps: usize,
    ) -> Option<&EvalCell> {
        self.cells.iter().find(|c| {
            c.train == train
                && c.test == test
                && c.model == model
                && c.horizon_steps == horizon_steps
        })
    }
}

/// The six trained (linear, angular) predictor pairs keyed by train tag and
/// model family.
pub struct EvalModels {
    pairs: BTreeMap<(TrainTag, ModelFamily), ModelPair>,
}

pub struct ModelPair {
    pub linear: Box<dyn StepPredictor>,
    pub angular: Box<dyn StepPredictor>,
}

impl Default for EvalModels {
    fn default() -> Self {
        Self::new()
    }
}

impl EvalModels {
    pub fn new() -> EvalModels {
        EvalModels {
            pairs: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, train: TrainTag, family: ModelFamily, pair: ModelPair) {
        self.pairs.insert((train, family), pair);
    }

    /// Perfect predictors in every slot; the end-to-end sanity mode.
    pub fn oracle() -> EvalModels {
        use crate::rollout::{OraclePredictor, TargetKind};
        let mut models = EvalModels::new();
        for train in TrainTag::ALL {
            for family in [ModelFamily::Mlp, ModelFamily::Asgp] {
                models.insert(
                    train,
                    family,
                    ModelPair {
                        linear: Box::new(OraclePredictor {
                            target: TargetKind::Linear,
                        }),
                        angular: Box::new(OraclePredictor {
                            target: TargetKind::Angular,
                        }),
                    },
                );
            }
        }
        models
    }
}

/// The three windowed test sets sharing one sampling interval.
pub struct TestSets {
    pub sets: BTreeMap<TestTag, Vec<FeatureWindow>>,
    pub dt: f64,
}

/// Fraction of errors within the threshold as a half-up two-decimal percent,
/// with the underlying counts.
pub fn success_rate(errors: &[f64], threshold: f64) -> Result<(f64, usize, usize), EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n_success = errors.iter().filter(|&&e| e <= threshold).count();
    let n_cases = errors.len();
    Ok((
        round2(100.0 * n_success as f64 / n_cases as f64),
        n_success,
        n_cases,
    ))
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Per-step position errors for one model pair over a test set:
/// `result[step][window]`, for steps `1..=k_max`.
pub fn horizon_position_errors(
    model_v: &dyn StepPredictor,
    model_w: &dyn StepPredictor,
    windows: &[FeatureWindow],
    k_max: usize,
    dt: f64,
    commands: CommandSource,
) -> Result<Vec<Vec<f64>>, EvalError> {
    if windows.is_empty() {
        return Err(EvalError::NoWindows);
    }
    let mut per_step = vec![Vec::with_capacity(windows.len()); k_max];
    for window in windows {
        if k_max > window.lookahead() {
            return Err(EvalError::HorizonExceedsLookahead {
                horizon: k_max,
                lookahead: window.lookahead(),
            });
        }
        let predicted = rollout(model_v, model_w, window, k_max, dt, commands)?;
        let pred_poses = integrate_trajectory(&predicted, &Pose::identity());
        let truth_poses =
            integrate_trajectory(&truth_trajectory(window, k_max, dt), &Pose::identity());
        for (step, bucket) in per_step.iter_mut().enumerate() {
            let err = position_error(&pred_poses, &truth_poses, step)
                .expect("step bounded by k_max");
            bucket.push(err);
        }
    }
    Ok(per_step)
}

fn errors_at_horizon(per_step: &[Vec<f64>], horizon: usize, mode: ErrorMode) -> Vec<f64> {
    match mode {
        ErrorMode::FinalStep => per_step[horizon - 1].clone(),
        ErrorMode::MaxOverPath => {
            let n = per_step[0].len();
            (0..n)
                .map(|w| {
                    per_step[..horizon]
                        .iter()
                        .map(|row| row[w])
                        .fold(0.0_f64, f64::max)
                })
                .collect()
        }
    }
}

/// Success counts for one model pair / test set / horizon.
pub fn evaluate_pair(
    model_v: &dyn StepPredictor,
    model_w: &dyn StepPredictor,
    windows: &[FeatureWindow],
    horizon: usize,
    threshold_m: f64,
    dt: f64,
    commands: CommandSource,
    mode: ErrorMode,
) -> Result<(f64, usize, usize), EvalError> {
    let per_step = horizon_position_errors(model_v, model_w, windows, horizon, dt, commands)?;
    success_rate(&errors_at_horizon(&per_step, horizon, mode), threshold_m)
}

/// Evaluate all six model pairs against all three test sets at every
/// configured horizon.
pub fn cross_matrix(
    models: &EvalModels,
    tests: &TestSets,
    config: &EvalConfig,
) -> Result<EvalMatrix, EvalError> {
    for train in TrainTag::ALL {
        for family in [ModelFamily::Mlp, ModelFamily::Asgp] {
            if !models.pairs.contains_key(&(train, family)) {
                return Err(EvalError::IncompleteInputs(format!(
                    "model pair {} / {}",
                    family.key(),
                    train.key()
                )));
            }
        }
    }
    for test in TestTag::ALL {
        if !tests.sets.contains_key(&test) {
            return Err(EvalError::IncompleteInputs(format!(
                "test set {}",
                test.key()
            )));
        }
    }
    let k_max = *config
        .horizons
        .iter()
        .max()
        .ok_or(EvalError::EmptyInput)?;

    let mut cells = Vec::with_capacity(18 * config.horizons.len());
    for ((train, family), pair) in &models.pairs {
        for (test, windows) in &tests.sets {
            let per_step = horizon_position_errors(
                pair.linear.as_ref(),
                pair.angular.as_ref(),
                windows,
                k_max,
                tests.dt,
                config.commands,
            )?;
            for &h in &config.horizons {
                let errors = errors_at_horizon(&per_step, h, config.error_mode);
                let (_, n_success, n_cases) = success_rate(&errors, config.threshold_m)?;
                cells.push(EvalCell::new(*train, *test, *family, h, n_success, n_cases));
            }
        }
    }
    Ok(EvalMatrix {
        cells,
        horizons: config.horizons.clone(),
        threshold_m: config.threshold_m,
        dt: tests.dt,
    })
}

pub fn horizon_ms(steps: usize, dt: f64) -> u64 {
    (steps as f64 * dt * 1000.0).round() as u64
}

/// Steps covering a horizon given in milliseconds (must divide evenly).
pub fn steps_for_horizon_ms(ms: u64, dt: f64) -> usize {
    (ms as f64 / 1000.0 / dt).round() as usize
}

fn threshold_label(threshold_m: f64) -> String {
    let cm = threshold_m * 100.0;
    if (cm - cm.round()).abs() < 1e-9 {
        format!("{:.0} cm", cm)
    } else {
        format!("{:.1} cm", cm)
    }
}

/// Render one horizon's table as Markdown, rows `Test x {MLP, ASGP}` and
/// columns `Train`.
pub fn render_table(matrix: &EvalMatrix, horizon_steps: usize) -> Result<String, EvalError> {
    let mut out = String::new();
    out.push_str(&format!(
        "Percent of pose prediction with no more than {} error at {}ms horizon.\n\n",
        threshold_label(matrix.threshold_m),
        horizon_ms(horizon_steps, matrix.dt)
    ));
    out.push_str("Test | Model | Tile | Carpet | Both (1:1)\n");
    out.push_str("--- | --- | --- | --- | ---\n");
    for test in TestTag::ALL {
        for family in [ModelFamily::Mlp, ModelFamily::Asgp] {
            let mut row = format!("{} | {}", test.header(), family.display());
            for train in TrainTag::ALL {
                let cell = matrix
                    .lookup(train, test, family, horizon_steps)
                    .ok_or(EvalError::IncompleteMatrix(horizon_steps))?;
                row.push_str(&format!(" | {:.2}", cell.success_pct));
            }
            row.push('\n');
            out.push_str(&row);
        }
    }
    Ok(out)
}

/// Machine-readable matrix:
/// `train,test,model,horizon_ms,success_pct,n_success,n_cases`.
pub fn matrix_csv(matrix: &EvalMatrix) -> String {
    let mut out = String::from("train,test,model,horizon_ms,success_pct,n_success,n_cases\n");
    for &h in &matrix.horizons {
        for train in TrainTag::ALL {
            for test in TestTag::ALL {
                for family in [ModelFamily::Mlp, ModelFamily::Asgp] {
                    if let Some(cell) = matrix.lookup(train, test, family, h) {
                        out.push_str(&format!(
                            "{},{},{},{},{:.2},{},{}\n",
                            train.key(),
                            test.key(),
                            family.key(),
                            horizon_ms(h, matrix.dt),
                            cell.success_pct,
                            cell.n_success,
                            cell.n_cases
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Diagnostic CSV of per-step error quantiles and success rate:
/// `step_ms,p50_error_m,p90_error_m,success_pct`.
pub fn emit_error_curve(
    per_step: &[Vec<f64>],
    threshold_m: f64,
    dt: f64,
) -> Result<String, EvalError> {
    if per_step.is_empty() || per_step[0].is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut out = String::from("step_ms,p50_error_m,p90_error_m,success_pct\n");
    for (i, errors) in per_step.iter().enumerate() {
        let (pct, _, _) = success_rate(errors, threshold_m)?;
        out.push_str(&format!(
            "{},{},{},{:.2}\n",
            horizon_ms(i + 1, dt),
            format_sig(percentile(errors, 50.0), 9),
            format_sig(percentile(errors, 90.0), 9),
            pct
        ));
    }
    Ok(out)
}

/// Linear-interpolated percentile (rank `p/100 * (n - 1)`).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}
