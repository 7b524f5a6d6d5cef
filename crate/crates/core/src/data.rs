//! Drive-log data model: CSV ingestion, validation, feature windowing,
//! standardization, and train-set mixing.
//!
//! A log is an ordered sequence of joystick + velocity records sampled at a
//! nominal 5 Hz. The on-disk format is a plain CSV with header `t,ux,uy,v,w`
//! (UTF-8, LF line endings); lines starting with `#` are ignored.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal sampling interval in seconds (5 Hz).
pub const NOMINAL_DT: f64 = 0.2;

/// Relative tolerance on inter-sample gaps before a log is flagged invalid.
pub const GAP_TOLERANCE: f64 = 0.10;

/// One timestamped joystick + velocity record.
///
/// `ux`, `uy` are joystick deflections in `[-1, 1]`; `v` is linear velocity
/// in m/s and `w` angular velocity in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub ux: f64,
    pub uy: f64,
    pub v: f64,
    pub w: f64,
}

/// An ordered drive log with its nominal sampling interval and terrain tag.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveLog {
    pub samples: Vec<Sample>,
    /// Nominal inter-sample interval in seconds (median gap when parsed).
    pub dt: f64,
    /// Free-form terrain tag ("tile", "carpet", "hybrid", ...).
    pub label: String,
}

impl DriveLog {
    pub fn new(samples: Vec<Sample>, dt: f64, label: impl Into<String>) -> Self {
        DriveLog {
            samples,
            dt,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration covered by the log in seconds (count x dt).
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }
}

/// An autoregressive input window with its k-step lookahead.
///
/// `history` holds the H most recent samples (most recent last). `future_u`
/// carries the joystick commands of the k samples after the window and
/// `target_v` / `target_w` their recorded velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub history: Vec<Sample>,
    pub future_u: Vec<(f64, f64)>,
    pub target_v: Vec<f64>,
    pub target_w: Vec<f64>,
}

impl FeatureWindow {
    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn lookahead(&self) -> usize {
        self.future_u.len()
    }

    /// Raw feature vector: the H history samples' `(ux, uy, v, w)` tuples
    /// concatenated oldest-first, 4H values.
    pub fn feature_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.history.len());
        for s in &self.history {
            out.extend_from_slice(&[s.ux, s.uy, s.v, s.w]);
        }
        out
    }
}

/// Per-feature affine transform `z = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fit per-feature mean and population standard deviation over rows.
    /// Features with (near-)zero variance get scale 1 so they map to 0.
    pub fn fit<'a, I>(rows: I) -> Result<Standardizer, DataError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter.next().ok_or(DataError::EmptyInput)?;
        let dim = first.len();
        let mut mean = first.to_vec();
        let mut m2 = vec![0.0; dim];
        let mut count = 1.0;
        for row in iter {
            assert_eq!(row.len(), dim, "standardizer rows must share a dimension");
            count += 1.0;
            for d in 0..dim {
                let delta = row[d] - mean[d];
                mean[d] += delta / count;
                m2[d] += delta * (row[d] - mean[d]);
            }
        }
        let scale = m2
            .iter()
            .map(|&s| {
                let std = (s / count).sqrt();
                if std < 1e-12 {
                    1.0
                } else {
                    std
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim());
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect()
    }

    /// Convenience for one-dimensional target standardizers.
    pub fn apply_scalar(&self, x: f64) -> f64 {
        (x - self.mean[0]) / self.scale[0]
    }

    pub fn invert_scalar(&self, z: f64) -> f64 {
        z * self.scale[0] + self.mean[0]
    }
}

/// A training collection of log segments; windowing never crosses segments.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub segments: Vec<DriveLog>,
    pub label: String,
}

impl TrainingSet {
    pub fn single(log: DriveLog) -> TrainingSet {
        let label = log.label.clone();
        TrainingSet {
            segments: vec![log],
            label,
        }
    }

    pub fn total_samples(&self) -> usize {
        self.segments.iter().map(|s| s.len()).sum()
    }

    /// Feature windows over every segment, concatenated in segment order.
    pub fn windows(&self, history: usize, lookahead: usize) -> Vec<FeatureWindow> {
        self.segments
            .iter()
            .flat_map(|seg| make_windows(seg, history, lookahead))
            .collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("malformed header: expected `t,ux,uy,v,w`, got `{0}`")]
    MalformedHeader(String),
    #[error("non-numeric field `{field}` in data row {row}")]
    NonNumericField { row: usize, field: String },
    #[error("log contains no data rows")]
    EmptyLog,
    #[error("empty input")]
    EmptyInput,
    #[error("log `{0}` does not cover the requested duration")]
    InsufficientData(String),
}

/// One invariant violation found by [`validate_log`].
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// Timestamp at `index` is not strictly greater than its predecessor.
    NonMonotoneTime { index: usize },
    /// Gap ending at `index` deviates from the nominal dt by more than 10%.
    GapOutOfTolerance { index: usize, gap: f64 },
    /// Field outside its documented range (e.g. |ux| > 1).
    RangeViolation {
        index: usize,
        field: &'static str,
        value: f64,
    },
    /// Non-finite value in a field that must be finite.
    NonFinite { index: usize, field: &'static str },
}

/// Validation report; empty iff the log satisfies every invariant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

const HEADER: &str = "t,ux,uy,v,w";
const FIELDS: [&str; 5] = ["t", "ux", "uy", "v", "w"];

/// Parse CSV text into a [`DriveLog`]. `#`-prefixed lines are ignored; the
/// nominal dt is inferred as the median inter-sample gap.
pub fn parse_log(csv_text: &str) -> Result<DriveLog, DataError> {
    let mut lines = csv_text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.starts_with('#') && !l.is_empty());
    let header = lines.next().unwrap_or("");
    if header != HEADER {
        return Err(DataError::MalformedHeader(header.to_string()));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let mut values = [0.0; 5];
        let mut parts = line.split(',');
        for (j, slot) in values.iter_mut().enumerate() {
            let raw = parts.next().ok_or_else(|| DataError::NonNumericField {
                row,
                field: format!("{} (missing)", FIELDS[j]),
            })?;
            *slot = raw
                .trim()
                .parse::<f64>()
                .map_err(|_| DataError::NonNumericField {
                    row,
                    field: format!("{}={}", FIELDS[j], raw.trim()),
                })?;
        }
        if parts.next().is_some() {
            return Err(DataError::NonNumericField {
                row,
                field: "trailing field".to_string(),
            });
        }
        samples.push(Sample {
            t: values[0],
            ux: values[1],
            uy: values[2],
            v: values[3],
            w: values[4],
        });
    }
    if samples.is_empty() {
        return Err(DataError::EmptyLog);
    }
    let dt = median_gap(&samples).unwrap_or(NOMINAL_DT);
    Ok(DriveLog::new(samples, dt, "unknown"))
}

fn median_gap(samples: &[Sample]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let mut gaps: Vec<f64> = samples.windows(2).map(|p| p[1].t - p[0].t).collect();
    gaps.sort_by(|a, b| a.total_cmp(b));
    let n = gaps.len();
    Some(if n % 2 == 1 {
        gaps[n / 2]
    } else {
        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
    })
}

/// Render a log as CSV with every field at 9 significant digits.
pub fn render_csv(log: &DriveLog) -> String {
    let mut out = String::with_capacity(16 + log.len() * 40);
    out.push_str(HEADER);
    out.push('\n');
    for s in &log.samples {
        for (i, v) in [s.t, s.ux, s.uy, s.v, s.w].iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format_sig(*v, 9));
        }
        out.push('\n');
    }
    out
}

/// Format a float with `sig` significant digits, positional where compact
/// and scientific otherwise (a `%g`-style rendering).
pub fn format_sig(value: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if value == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", sig - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let body = if exp >= -4 && exp < sig as i32 {
        let point = exp + 1;
        if point <= 0 {
            format!("0.{}{}", "0".repeat(point.unsigned_abs() as usize), digits)
        } else if point as usize >= digits.len() {
            format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
        } else {
            format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
        }
    } else if digits.len() == 1 {
        format!("{digits}e{exp}")
    } else {
        format!("{}.{}e{}", &digits[..1], &digits[1..], exp)
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Check every log invariant and report all violations.
pub fn validate_log(log: &DriveLog) -> ValidationReport {
    let mut findings = Vec::new();
    for (i, s) in log.samples.iter().enumerate() {
        for (field, value) in [("t", s.t), ("ux", s.ux), ("uy", s.uy), ("v", s.v), ("w", s.w)] {
            if !value.is_finite() {
                findings.push(Finding::NonFinite { index: i, field });
            }
        }
        for (field, value) in [("ux", s.ux), ("uy", s.uy)] {
            if value.is_finite() && value.abs() > 1.0 {
                findings.push(Finding::RangeViolation {
                    index: i,
                    field,
                    value,
                });
            }
        }
    }
    for i in 1..log.samples.len() {
        let gap = log.samples[i].t - log.samples[i - 1].t;
        if gap <= 0.0 {
            findings.push(Finding::NonMonotoneTime { index: i });
        } else if (gap - log.dt).abs() > GAP_TOLERANCE * log.dt {
            findings.push(Finding::GapOutOfTolerance { index: i, gap });
        }
    }
    ValidationReport { findings }
}

/// Extract every full window: one anchored at each index with `history`
/// samples behind it and `lookahead` samples ahead. Count is
/// `max(0, N - history - lookahead + 1)`.
pub fn make_windows(log: &DriveLog, history: usize, lookahead: usize) -> Vec<FeatureWindow> {
    assert!(history >= 1 && lookahead >= 1);
    let n = log.samples.len();
    if n < history + lookahead {
        return Vec::new();
    }
    let mut windows = Vec::with_capacity(n - history - lookahead + 1);
    for anchor in (history - 1)..=(n - 1 - lookahead) {
        let hist = log.samples[anchor + 1 - history..=anchor].to_vec();
        let future = &log.samples[anchor + 1..=anchor + lookahead];
        windows.push(FeatureWindow {
            history: hist,
            future_u: future.iter().map(|s| (s.ux, s.uy)).collect(),
            target_v: future.iter().map(|s| s.v).collect(),
            target_w: future.iter().map(|s| s.w).collect(),
        });
    }
    windows
}

/// Fit a [`Standardizer`] over all history feature vectors of the windows.
pub fn standardize_fit(windows: &[FeatureWindow]) -> Result<Standardizer, DataError> {
    let rows: Vec<Vec<f64>> = windows.iter().map(FeatureWindow::feature_vector).collect();
    Standardizer::fit(rows.iter().map(Vec::as_slice))
}

/// Take the first `minutes_each` minutes of two logs as a two-segment
/// training collection. Windowing stays per-segment, so no window spans
/// the seam.
pub fn mix_logs(a: &DriveLog, b: &DriveLog, minutes_each: u64) -> Result<TrainingSet, DataError> {
    if minutes_each == 0 {
        return Ok(TrainingSet {
            segments: Vec::new(),
            label: "both".to_string(),
        });
    }
    let mut segments = Vec::with_capacity(2);
    for log in [a, b] {
        let needed = (minutes_each as f64 * 60.0 / log.dt).round() as usize;
        if log.samples.len() < needed {
            return Err(DataError::InsufficientData(log.label.clone()));
        }
        segments.push(DriveLog::new(
            log.samples[..needed].to_vec(),
            log.dt,
            log.label.clone(),
        ));
    }
    Ok(TrainingSet {
        segments,
        label: "both".to_string(),
    })
}
