//! Dead-reckoning over the unicycle model with exact-arc steps, applied
//! identically to predicted and recorded velocity trajectories.

use crate::rollout::VelocityTrajectory;
use thiserror::Error;

/// Below this angular rate the arc collapses to a straight segment along
/// the midpoint heading, which agrees with the arc to second order.
pub const ANGULAR_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("step {step} out of range (lengths {pred} and {truth})")]
    IndexOutOfRange {
        step: usize,
        pred: usize,
        truth: usize,
    },
}

/// Planar pose; heading is kept wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn identity() -> Pose {
        Pose {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrajectory {
    pub poses: Vec<Pose>,
    pub dt: f64,
}

impl PoseTrajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r <= -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

/// One exact-arc unicycle step from `p` under constant `(v, w)` for `dt`.
pub fn integrate_step(p: &Pose, v: f64, w: f64, dt: f64) -> Pose {
    let theta_next = p.theta + w * dt;
    let (x, y) = if w.abs() >= ANGULAR_EPS {
        let radius = v / w;
        (
            p.x + radius * (theta_next.sin() - p.theta.sin()),
            p.y - radius * (theta_next.cos() - p.theta.cos()),
        )
    } else {
        let mid = p.theta + 0.5 * w * dt;
        (p.x + v * dt * mid.cos(), p.y + v * dt * mid.sin())
    };
    Pose {
        x,
        y,
        theta: wrap_angle(theta_next),
    }
}

/// Fold [`integrate_step`] over a velocity trajectory; one pose per step.
pub fn integrate_trajectory(vt: &VelocityTrajectory, start: &Pose) -> PoseTrajectory {
    let mut poses = Vec::with_capacity(vt.len());
    let mut p = *start;
    for i in 0..vt.len() {
        p = integrate_step(&p, vt.v[i], vt.w[i], vt.dt);
        poses.push(p);
    }
    PoseTrajectory { poses, dt: vt.dt }
}

/// Planar L2 distance between the two trajectories at `step`; heading is
/// ignored.
pub fn position_error(
    pred: &PoseTrajectory,
    truth: &PoseTrajectory,
    step: usize,
) -> Result<f64, PoseError> {
    if step >= pred.len() || step >= truth.len() {
        return Err(PoseError::IndexOutOfRange {
            step,
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let dx = pred.poses[step].x - truth.poses[step].x;
    let dy = pred.poses[step].y - truth.poses[step].y;
    Ok((dx * dx + dy * dy).sqrt())
}
