//! Terrain-parameterized drive-log simulator.
//!
//! Produces synthetic joystick + velocity logs at 5 Hz: seeded piecewise
//! joystick excitation drives a first-order lag toward the commanded
//! velocity, and the recorded velocities carry clipped Gaussian measurement
//! noise. Everything is a pure function of the configuration; the RNG is
//! ChaCha8 (`rand_chacha`), which is stable across platforms.

use crate::data::{DriveLog, Sample, NOMINAL_DT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Noise samples are clipped at this many standard deviations.
pub const NOISE_CLIP_SIGMA: f64 = 6.0;

/// First-order terrain response: steady-state gains, lag time constants,
/// and velocity measurement-noise standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainProfile {
    pub name: String,
    /// m/s of linear velocity per unit forward deflection.
    pub gain_v: f64,
    /// rad/s of angular velocity per unit lateral deflection.
    pub gain_w: f64,
    pub tau_v: f64,
    pub tau_w: f64,
    pub noise_v: f64,
    pub noise_w: f64,
}

impl TerrainProfile {
    /// Hard, low-drag floor: quick response, clean odometry.
    pub fn tile() -> TerrainProfile {
        TerrainProfile {
            name: "tile".to_string(),
            gain_v: 1.0,
            gain_w: 1.2,
            tau_v: 0.5,
            tau_w: 0.35,
            noise_v: 0.01,
            noise_w: 0.02,
        }
    }

    /// High-drag floor: lower gain, slower response, noisier odometry.
    pub fn carpet() -> TerrainProfile {
        TerrainProfile {
            name: "carpet".to_string(),
            gain_v: 0.85,
            gain_w: 1.0,
            tau_v: 0.8,
            tau_w: 0.55,
            noise_v: 0.02,
            noise_w: 0.04,
        }
    }
}

/// Floor layout over the run: one profile everywhere, or two profiles
/// alternating on a fixed period.
#[derive(Debug, Clone, PartialEq)]
pub enum Terrain {
    Uniform(TerrainProfile),
    Alternating {
        first: TerrainProfile,
        second: TerrainProfile,
        period_s: f64,
    },
}

impl Terrain {
    /// Alternating 60 s tile / carpet segments.
    pub fn hybrid() -> Terrain {
        Terrain::Alternating {
            first: TerrainProfile::tile(),
            second: TerrainProfile::carpet(),
            period_s: 60.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Terrain::Uniform(p) => p.name.clone(),
            Terrain::Alternating { .. } => "hybrid".to_string(),
        }
    }

    pub fn profile_at(&self, t: f64) -> &TerrainProfile {
        match self {
            Terrain::Uniform(p) => p,
            Terrain::Alternating {
                first,
                second,
                period_s,
            } => {
                if (t / period_s).floor() as i64 % 2 == 0 {
                    first
                } else {
                    second
                }
            }
        }
    }
}

/// Joystick excitation: piecewise-constant plateaus with optional linear
/// ramps at segment transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpec {
    /// Plateau duration range in seconds.
    pub duration_range: (f64, f64),
    /// Per-axis deflection magnitude range; signs are drawn independently.
    pub magnitude_range: (f64, f64),
    /// Fraction of transitions smoothed by a linear ramp.
    pub ramp_fraction: f64,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        ExcitationSpec {
            duration_range: (1.0, 4.0),
            magnitude_range: (0.1, 0.9),
            ramp_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub minutes: f64,
    pub terrain: Terrain,
    pub excitation: ExcitationSpec,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(terrain: Terrain, minutes: f64, seed: u64) -> SimConfig {
        SimConfig {
            minutes,
            terrain,
            excitation: ExcitationSpec::default(),
            seed,
        }
    }
}

/// One first-order lag step toward the commanded velocities.
pub fn step_dynamics(
    v: f64,
    w: f64,
    ux: f64,
    uy: f64,
    terrain: &TerrainProfile,
    dt: f64,
) -> (f64, f64) {
    let v_next = v + dt * (terrain.gain_v * uy - v) / terrain.tau_v;
    let w_next = w + dt * (terrain.gain_w * ux - w) / terrain.tau_w;
    (v_next, w_next)
}

/// Seeded joystick excitation at 5 Hz: `minutes * 300` samples of
/// per-axis plateaus with ramped transitions.
pub fn generate_excitation(spec: &ExcitationSpec, minutes: f64, seed: u64) -> Vec<(f64, f64)> {
    let n = (minutes * 60.0 / NOMINAL_DT).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let (mut prev_x, mut prev_y) = (0.0_f64, 0.0_f64);
    let mut first = true;
    while out.len() < n {
        let dur_s = sample_range(&mut rng, spec.duration_range);
        let seg_len = ((dur_s / NOMINAL_DT).round() as usize).max(1);
        let ux = signed_magnitude(&mut rng, spec.magnitude_range);
        let uy = signed_magnitude(&mut rng, spec.magnitude_range);
        let ramped = rng.random::<f64>() < spec.ramp_fraction && !first;
        let ramp_len = if ramped { seg_len.min(3) } else { 0 };
        for i in 0..seg_len {
            if out.len() == n {
                break;
            }
            if i < ramp_len {
                let f = (i + 1) as f64 / (ramp_len + 1) as f64;
                out.push((prev_x + f * (ux - prev_x), prev_y + f * (uy - prev_y)));
            } else {
                out.push((ux, uy));
            }
        }
        prev_x = ux;
        prev_y = uy;
        first = false;
    }
    out
}

fn sample_range(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    }
}

fn signed_magnitude(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    let mag = sample_range(rng, range);
    if rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

/// Run the dynamics under the seeded excitation and record noisy velocities.
///
/// Sample `i` holds the command issued at tick `i` and the velocity measured
/// before that command takes effect, so the next velocity is a function of
/// the current sample's command and state.
pub fn simulate(config: &SimConfig) -> DriveLog {
    let excitation = generate_excitation(&config.excitation, config.minutes, config.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);
    let dt = NOMINAL_DT;
    let (mut v, mut w) = (0.0_f64, 0.0_f64);
    let mut samples = Vec::with_capacity(excitation.len());
    for (i, &(ux, uy)) in excitation.iter().enumerate() {
        let t = i as f64 * dt;
        let profile = config.terrain.profile_at(t);
        let v_rec = v + clipped_noise(&mut noise_rng, profile.noise_v);
        let w_rec = w + clipped_noise(&mut noise_rng, profile.noise_w);
        samples.push(Sample {
            t,
            ux,
            uy,
            v: v_rec,
            w: w_rec,
        });
        let next = step_dynamics(v, w, ux, uy, profile, dt);
        v = next.0;
        w = next.1;
    }
    DriveLog::new(samples, dt, config.terrain.label())
}

fn clipped_noise(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z.clamp(-NOISE_CLIP_SIGMA, NOISE_CLIP_SIGMA)
}

/// CSV text for a simulated log, with a leading comment line recording the
/// seed, profile, and RNG so runs can be reproduced from the file alone.
pub fn log_to_csv(log: &DriveLog, seed: u64) -> String {
    format!(
        "# seed={} profile={} rng=chacha8\n{}",
        seed,
        log.label,
        crate::data::render_csv(log)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_log;

    fn still_spec() -> ExcitationSpec {
        ExcitationSpec {
            duration_range: (1.0, 1.0),
            magnitude_range: (0.0, 0.0),
            ramp_fraction: 0.0,
        }
    }

    #[test]
    fn one_lag_step_toward_command() {
        let mut profile = TerrainProfile::tile();
        profile.gain_v = 1.0;
        profile.tau_v = 0.4;
        let (v, _) = step_dynamics(0.0, 0.0, 0.0, 1.0, &profile, 0.2);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let profile = TerrainProfile::tile();
        let uy = 0.7;
        let v = profile.gain_v * uy;
        let (v_next, _) = step_dynamics(v, 0.0, 0.0, uy, &profile, 0.2);
        assert!((v_next - v).abs() < 1e-12);
    }

    #[test]
    fn zero_command_decays() {
        let mut profile = TerrainProfile::tile();
        profile.tau_v = 0.4;
        let (v, _) = step_dynamics(1.0, 0.0, 0.0, 0.0, &profile, 0.2);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn excitation_is_deterministic_in_seed() {
        let spec = ExcitationSpec::default();
        let a = generate_excitation(&spec, 2.0, 9);
        let b = generate_excitation(&spec, 2.0, 9);
        assert_eq!(a, b);
        let c = generate_excitation(&spec, 2.0, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn excitation_sample_count() {
        assert_eq!(generate_excitation(&ExcitationSpec::default(), 1.0, 1).len(), 300);
    }

    #[test]
    fn degenerate_magnitude_range_pins_plateaus() {
        let spec = ExcitationSpec {
            duration_range: (1.0, 2.0),
            magnitude_range: (0.3, 0.3),
            ramp_fraction: 0.0,
        };
        for (ux, uy) in generate_excitation(&spec, 1.0, 4) {
            assert!((ux.abs() - 0.3).abs() < 1e-15);
            assert!((uy.abs() - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn rest_without_noise_stays_at_rest() {
        let mut profile = TerrainProfile::tile();
        profile.noise_v = 0.0;
        profile.noise_w = 0.0;
        let config = SimConfig {
            minutes: 0.5,
            terrain: Terrain::Uniform(profile),
            excitation: still_spec(),
            seed: 3,
        };
        let log = simulate(&config);
        assert!(log.samples.iter().all(|s| s.v == 0.0 && s.w == 0.0));
    }

    #[test]
    fn sample_count_matches_duration() {
        let config = SimConfig::new(Terrain::Uniform(TerrainProfile::tile()), 2.0, 7);
        assert_eq!(simulate(&config).len(), 600);
    }

    #[test]
    fn simulate_is_deterministic_and_seed_sensitive() {
        let config = SimConfig::new(Terrain::Uniform(TerrainProfile::tile()), 1.0, 42);
        let a = simulate(&config);
        let b = simulate(&config);
        assert_eq!(log_to_csv(&a, 42), log_to_csv(&b, 42));
        let mut other = config.clone();
        other.seed = 43;
        assert_ne!(log_to_csv(&a, 42), log_to_csv(&simulate(&other), 43));
    }

    #[test]
    fn constant_command_settles_within_one_percent() {
        let mut profile = TerrainProfile::carpet();
        profile.noise_v = 0.0;
        profile.noise_w = 0.0;
        let target = profile.gain_v * 0.5;
        let config = SimConfig {
            minutes: 1.0,
            terrain: Terrain::Uniform(profile.clone()),
            excitation: ExcitationSpec {
                duration_range: (120.0, 120.0),
                magnitude_range: (0.5, 0.5),
                ramp_fraction: 0.0,
            },
            seed: 5,
        };
        let log = simulate(&config);
        // uy is +/-0.5 for the whole run; compare against the signed target.
        let uy = log.samples[0].uy;
        let settled = &log.samples[(10.0 * profile.tau_v / 0.2) as usize..];
        for s in settled {
            assert!((s.v - target * uy.signum()).abs() <= 0.01 * target.abs());
        }
    }

    #[test]
    fn velocities_stay_within_noise_bound() {
        let profile = TerrainProfile::carpet();
        let bound_v = profile.gain_v + NOISE_CLIP_SIGMA * profile.noise_v;
        let bound_w = profile.gain_w + NOISE_CLIP_SIGMA * profile.noise_w;
        let config = SimConfig::new(Terrain::Uniform(profile), 3.0, 11);
        for s in simulate(&config).samples {
            assert!(s.v.abs() <= bound_v);
            assert!(s.w.abs() <= bound_w);
        }
    }

    #[test]
    fn hybrid_alternates_profiles() {
        let t = Terrain::hybrid();
        assert_eq!(t.profile_at(0.0).name, "tile");
        assert_eq!(t.profile_at(61.0).name, "carpet");
        assert_eq!(t.profile_at(121.0).name, "tile");
        assert_eq!(t.label(), "hybrid");
    }

    #[test]
    fn csv_header_comment_is_ignored_by_parse() {
        let config = SimConfig::new(Terrain::Uniform(TerrainProfile::tile()), 0.5, 2);
        let log = simulate(&config);
        let parsed = parse_log(&log_to_csv(&log, 2)).unwrap();
        assert_eq!(parsed.len(), log.len());
    }
}
