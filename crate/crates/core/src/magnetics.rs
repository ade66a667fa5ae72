//! Quasi-static model of the magnetic ribcage joints.
//!
//! Opposing magnet pairs sit on rails either side of each joint axis. Bending
//! a joint by `α` closes the gap on one side and opens it on the other,
//! `s± = rail_gap ∓ lever_arm·sin α`, so the pair forces produce a restoring
//! torque about the axis. Forces use the coaxial point-dipole law.
//!
//! In a chain, the passive ribcage joints follow the servo-driven
//! endoskeleton: every rib is sprung magnetically to the endoskeleton's local
//! orientation. The torque at passive joint `p` therefore collects the spring
//! torques of rib `p` and every rib distal to it.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream;

/// Vacuum permeability (T·m/A).
pub const MU0: f64 = 4.0e-7 * PI;
/// Remanence of N52 neodymium (T).
pub const N52_REMANENCE: f64 = 1.45;
/// Closest allowed face separation (m); the gaps never shrink below this.
pub const MIN_SEPARATION: f64 = 2e-4;

const RESIDUAL_TOL: f64 = 1e-12;
const SWEEP_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagneticsError {
    #[error("separation must be > 0, got {0}")]
    Separation(f64),
    #[error("joint {joint}: |angle| = {angle} rad reaches the bending limit {limit} rad")]
    Limit { joint: usize, angle: f64, limit: f64 },
    #[error(
        "joint {joint}: no equilibrium in range (net torque {torque_low} N·m at -limit, {torque_high} N·m at +limit)"
    )]
    NoEquilibrium {
        joint: usize,
        torque_low: f64,
        torque_high: f64,
    },
    #[error("invalid geometry `{field}`: {reason}")]
    Geometry { field: &'static str, reason: String },
    #[error("expected {expected} values, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("chain sweeps did not converge within {0} iterations")]
    NotConverged(usize),
}

/// Dipole moment (A·m²) of a uniformly magnetized cylinder.
pub fn cylinder_moment(remanence: f64, diameter: f64, length: f64) -> f64 {
    remanence * PI * 0.25 * diameter * diameter * length / MU0
}

/// Force between coaxial, anti-aligned point dipoles; positive is repulsive.
pub fn magnet_pair_force(moment1: f64, moment2: f64, separation: f64) -> Result<f64, MagneticsError> {
    if !(separation > 0.0) {
        return Err(MagneticsError::Separation(separation));
    }
    Ok(pair_force(moment1, moment2, separation))
}

#[inline]
fn pair_force(m1: f64, m2: f64, s: f64) -> f64 {
    3.0 * MU0 * m1 * m2 / (2.0 * PI * s.powi(4))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RibcageGeometry {
    /// Passive joints in the exoskeleton chain.
    pub n_joints: usize,
    /// Magnets per joint; they act as `magnets_per_joint / 2` opposing pairs,
    /// split evenly between the two sides of the axis.
    pub magnets_per_joint: usize,
    /// Dipole moment per magnet (A·m²).
    pub magnet_moment: f64,
    /// Face separation of each pair at zero bend (m).
    pub rail_gap: f64,
    /// Distance from the joint axis to the magnet line (m).
    pub lever_arm: f64,
    /// Rigid constraint bar fitted.
    pub constrained: bool,
    pub max_angle_constrained: f64,
    pub max_angle_free: f64,
}

impl Default for RibcageGeometry {
    fn default() -> Self {
        Self {
            n_joints: 1,
            magnets_per_joint: 8,
            magnet_moment: cylinder_moment(N52_REMANENCE, 4e-3, 5e-3),
            rail_gap: 10e-3,
            lever_arm: 10e-3,
            constrained: true,
            max_angle_constrained: 30f64.to_radians(),
            max_angle_free: 50f64.to_radians(),
        }
    }
}

impl RibcageGeometry {
    pub fn unconstrained() -> Self {
        Self {
            constrained: false,
            ..Self::default()
        }
    }

    pub fn with_joints(mut self, n: usize) -> Self {
        self.n_joints = n;
        self
    }

    pub fn validate(&self) -> Result<(), MagneticsError> {
        let bad = |field, reason: &str| MagneticsError::Geometry {
            field,
            reason: reason.to_string(),
        };
        if self.n_joints == 0 {
            return Err(bad("n_joints", "must be >= 1"));
        }
        if self.magnets_per_joint == 0 || !self.magnets_per_joint.is_multiple_of(2) {
            return Err(bad("magnets_per_joint", "must be a positive even number"));
        }
        if !(self.magnet_moment.is_finite() && self.magnet_moment >= 0.0) {
            return Err(bad("magnet_moment", "must be finite and >= 0"));
        }
        if !(self.rail_gap.is_finite() && self.rail_gap > 0.0) {
            return Err(bad("rail_gap", "must be > 0"));
        }
        if !(self.lever_arm.is_finite() && self.lever_arm > 0.0) {
            return Err(bad("lever_arm", "must be > 0"));
        }
        if !(self.max_angle_constrained > 0.0 && self.max_angle_constrained < self.max_angle_free) {
            return Err(bad("max_angle_constrained", "need 0 < constrained limit < free limit"));
        }
        if !(self.max_angle_free < 0.5 * PI) {
            return Err(bad("max_angle_free", "must be below π/2"));
        }
        Ok(())
    }

    fn pairs_per_side(&self) -> f64 {
        (self.magnets_per_joint / 2) as f64 / 2.0
    }

    /// Magnetic torque at a relative bend `alpha`, without limit checks.
    fn torque(&self, alpha: f64) -> f64 {
        let (s, c) = alpha.sin_cos();
        let inner = (self.rail_gap - self.lever_arm * s).max(MIN_SEPARATION);
        let outer = (self.rail_gap + self.lever_arm * s).max(MIN_SEPARATION);
        let m = self.magnet_moment;
        self.pairs_per_side() * self.lever_arm * c * (pair_force(m, m, outer) - pair_force(m, m, inner))
    }
}

/// Hard bending stop of a joint: the constrained or free limit.
pub fn max_bend_angle(geom: &RibcageGeometry) -> f64 {
    if geom.constrained {
        geom.max_angle_constrained
    } else {
        geom.max_angle_free
    }
}

/// Net magnetic torque (N·m) about the joint axis at bend `angle`.
pub fn joint_torque(geom: &RibcageGeometry, angle: f64) -> Result<f64, MagneticsError> {
    joint_torque_at(geom, 0, angle)
}

fn joint_torque_at(geom: &RibcageGeometry, joint: usize, angle: f64) -> Result<f64, MagneticsError> {
    let limit = max_bend_angle(geom);
    if !(angle.abs() < limit) {
        return Err(MagneticsError::Limit {
            joint,
            angle: angle.abs(),
            limit,
        });
    }
    Ok(geom.torque(angle))
}

/// `angle_rad,torque_Nm` over `samples` evenly spaced angles strictly inside
/// the bending limits.
pub fn torque_curve_csv(geom: &RibcageGeometry, samples: usize) -> Result<String, MagneticsError> {
    geom.validate()?;
    let limit = max_bend_angle(geom);
    let samples = samples.max(2);
    let mut out = String::from("angle_rad,torque_Nm\n");
    for i in 0..samples {
        let a = -limit + 2.0 * limit * (i as f64 + 0.5) / samples as f64;
        let _ = writeln!(out, "{},{}", a, joint_torque(geom, a)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineConfiguration {
    pub servo_angles: Vec<f64>,
    pub passive_angles: Vec<f64>,
}

/// Endoskeleton reference bend of each passive joint: each servo's angle is
/// shared evenly by the passive joints it spans.
pub fn reference_angles(n_joints: usize, servo_angles: &[f64]) -> Result<Vec<f64>, MagneticsError> {
    let n_servo = servo_angles.len();
    if n_servo == 0 || n_servo > n_joints {
        return Err(MagneticsError::Dimension {
            expected: n_joints,
            actual: n_servo,
        });
    }
    let owner = |p: usize| p * n_servo / n_joints;
    let mut span = vec![0usize; n_servo];
    for p in 0..n_joints {
        span[owner(p)] += 1;
    }
    Ok((0..n_joints)
        .map(|p| servo_angles[owner(p)] / span[owner(p)] as f64)
        .collect())
}

/// Torque at passive joint `p` given all passive angles: magnetic springs of
/// rib `p` and every distal rib, plus the external load.
fn chain_torque(geom: &RibcageGeometry, reference: &[f64], angles: &[f64], external: &[f64], p: usize) -> f64 {
    let mut mismatch: f64 = (0..p).map(|q| angles[q] - reference[q]).sum();
    let mut total = external[p];
    for r in p..angles.len() {
        mismatch += angles[r] - reference[r];
        total += geom.torque(mismatch);
    }
    total
}

/// Root of a decreasing-or-increasing bracketed function by safeguarded
/// regula falsi (Illinois variant), falling back to bisection.
fn bracketed_root<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < 1e-16 || fc.abs() < RESIDUAL_TOL * 1e-3 {
            return c;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

/// Finds the passive joint angles at which magnetic and external torques
/// balance.
///
/// Each joint is solved by bracketed root finding within its bending limits;
/// chains are swept Gauss–Seidel style until no angle moves by more than
/// `1e-12` rad.
pub fn solve_passive_angles(
    geom: &RibcageGeometry,
    servo_angles: &[f64],
    external_torques: &[f64],
) -> Result<SpineConfiguration, MagneticsError> {
    solve_from(geom, servo_angles, external_torques, None)
}

/// Like [`solve_passive_angles`], starting the sweeps from `initial`.
pub fn solve_from(
    geom: &RibcageGeometry,
    servo_angles: &[f64],
    external_torques: &[f64],
    initial: Option<&[f64]>,
) -> Result<SpineConfiguration, MagneticsError> {
    let passive = sweep(geom, servo_angles, external_torques, initial)?;
    Ok(SpineConfiguration {
        servo_angles: servo_angles.to_vec(),
        passive_angles: passive,
    })
}

fn sweep(
    geom: &RibcageGeometry,
    servo_angles: &[f64],
    external: &[f64],
    initial: Option<&[f64]>,
) -> Result<Vec<f64>, MagneticsError> {
    geom.validate()?;
    let n = geom.n_joints;
    if external.len() != n {
        return Err(MagneticsError::Dimension {
            expected: n,
            actual: external.len(),
        });
    }
    let reference = reference_angles(n, servo_angles)?;
    let limit = max_bend_angle(geom);
    for (p, r) in reference.iter().enumerate() {
        if !(r.abs() < limit) {
            return Err(MagneticsError::Limit {
                joint: p,
                angle: r.abs(),
                limit,
            });
        }
    }
    let mut angles = match initial {
        Some(init) if init.len() == n => init.to_vec(),
        Some(init) => {
            return Err(MagneticsError::Dimension {
                expected: n,
                actual: init.len(),
            })
        }
        None => reference.clone(),
    };
    let edge = limit * (1.0 - 1e-12);
    for _ in 0..MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for p in 0..n {
            let torque_at = |a: f64| {
                let mut trial = angles.clone();
                trial[p] = a;
                chain_torque(geom, &reference, &trial, external, p)
            };
            let (lo, hi) = (torque_at(-edge), torque_at(edge));
            let next = if lo == 0.0 {
                -edge
            } else if hi == 0.0 {
                edge
            } else if (lo > 0.0) != (hi > 0.0) {
                bracketed_root(torque_at, -edge, edge, lo, hi)
            } else {
                return Err(MagneticsError::NoEquilibrium {
                    joint: p,
                    torque_low: lo,
                    torque_high: hi,
                });
            };
            max_change = max_change.max((next - angles[p]).abs());
            angles[p] = next;
        }
        if max_change <= SWEEP_TOL {
            return Ok(angles);
        }
    }
    Err(MagneticsError::NotConverged(MAX_SWEEPS))
}

/// Net torque (magnetic plus external) at every passive joint.
pub fn residual_torques(
    geom: &RibcageGeometry,
    config: &SpineConfiguration,
    external_torques: &[f64],
) -> Result<Vec<f64>, MagneticsError> {
    let reference = reference_angles(geom.n_joints, &config.servo_angles)?;
    Ok((0..geom.n_joints)
        .map(|p| chain_torque(geom, &reference, &config.passive_angles, external_torques, p))
        .collect())
}

/// Random disturbance torque applied during a drive test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Standard deviation (N·m) of a per-joint bias drawn once per run.
    pub bias_sd: f64,
    /// Standard deviation (N·m) of a per-joint term redrawn every cycle.
    pub cycle_sd: f64,
    /// Standard deviation (N·m) of a per-joint term redrawn every sample.
    pub noise_sd: f64,
    pub seed: u64,
}

/// Sinusoidal servo drive `servo(t) = amplitude·sin(2π f t)` applied to every
/// servo, and the rib dynamics it excites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveTest {
    pub n_servos: usize,
    /// rad
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    pub cycles: usize,
    pub samples_per_cycle: usize,
    /// Integration steps between recorded samples.
    pub steps_per_sample: usize,
    /// Rotational inertia of one rib about its joint (kg·m²).
    pub inertia: f64,
    /// Viscous joint damping (N·m·s/rad).
    pub damping: f64,
}

impl Default for DriveTest {
    fn default() -> Self {
        Self {
            n_servos: 1,
            amplitude: 0.3,
            frequency: 0.7,
            cycles: 10,
            samples_per_cycle: 70,
            steps_per_sample: 50,
            inertia: 2e-5,
            damping: 1e-3,
        }
    }
}

/// Passive-joint response to a sinusoidal servo drive.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveResponse {
    pub samples_per_cycle: usize,
    /// Sample times (s).
    pub times: Vec<f64>,
    /// `reference[s][p]`: commanded bend of joint `p` at sample `s`.
    pub reference: Vec<Vec<f64>>,
    /// `angles[s][p]`: passive angle of joint `p` at sample `s`.
    pub angles: Vec<Vec<f64>>,
}

impl DriveResponse {
    pub fn joint_series(&self, p: usize) -> Vec<f64> {
        self.angles.iter().map(|a| a[p]).collect()
    }

    /// Mean deviation of the joint from its commanded reference.
    pub fn mean_offset(&self, p: usize) -> f64 {
        let n = self.angles.len().max(1) as f64;
        self.angles
            .iter()
            .zip(&self.reference)
            .map(|(a, r)| a[p] - r[p])
            .sum::<f64>()
            / n
    }

    /// Spread (max − min) of the per-cycle peak angle.
    pub fn peak_variation(&self, p: usize) -> f64 {
        let s = self.joint_series(p);
        let peaks: Vec<f64> = s
            .chunks(self.samples_per_cycle)
            .map(|c| c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let hi = peaks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = peaks.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// Simulates the rib chain under a sinusoidal servo drive and a random
/// disturbance torque.
///
/// Each rib is a damped rotor driven by the magnetic chain torque and the
/// disturbance; the hard stops are inelastic. The chain starts at rest on the
/// reference.
#[allow(clippy::needless_range_loop)]
pub fn drive_response(
    geom: &RibcageGeometry,
    drive: &DriveTest,
    disturbance: Disturbance,
) -> Result<DriveResponse, MagneticsError> {
    geom.validate()?;
    let bad = |field, reason: String| MagneticsError::Geometry { field, reason };
    if drive.cycles == 0 || drive.samples_per_cycle == 0 || drive.steps_per_sample == 0 {
        return Err(bad("drive", "cycles, samples and steps must be >= 1".into()));
    }
    if !(drive.frequency > 0.0 && drive.inertia > 0.0 && drive.damping >= 0.0) {
        return Err(bad("drive", "need frequency > 0, inertia > 0, damping >= 0".into()));
    }
    let n = geom.n_joints;
    let limit = max_bend_angle(geom);
    let peak = reference_angles(n, &vec![drive.amplitude; drive.n_servos])?;
    if let Some((p, r)) = peak.iter().enumerate().find(|(_, r)| !(r.abs() < limit)) {
        return Err(MagneticsError::Limit {
            joint: p,
            angle: r.abs(),
            limit,
        });
    }
    let normal = |sd: f64, field: &'static str| Normal::new(0.0, sd.max(0.0)).map_err(|e| bad(field, e.to_string()));
    let bias_dist = normal(disturbance.bias_sd, "bias_sd")?;
    let cycle_dist = normal(disturbance.cycle_sd, "cycle_sd")?;
    let noise_dist = normal(disturbance.noise_sd, "noise_sd")?;
    let mut rng = stream(disturbance.seed, "disturbance", 0);
    let bias: Vec<f64> = (0..n).map(|_| bias_dist.sample(&mut rng)).collect();

    let period = 1.0 / drive.frequency;
    let dt = period / (drive.samples_per_cycle * drive.steps_per_sample) as f64;
    let reference_at = |t: f64| {
        let s = (2.0 * PI * drive.frequency * t).sin();
        peak.iter().map(|r| r * s).collect::<Vec<f64>>()
    };
    let total = drive.cycles * drive.samples_per_cycle;
    let mut times = Vec::with_capacity(total);
    let mut references = Vec::with_capacity(total);
    let mut angles_out = Vec::with_capacity(total);
    let mut angles = vec![0.0; n];
    let mut rates = vec![0.0; n];
    let mut step = 0usize;
    for _ in 0..drive.cycles {
        let cycle_bias: Vec<f64> = bias.iter().map(|b| b + cycle_dist.sample(&mut rng)).collect();
        for _ in 0..drive.samples_per_cycle {
            let t = step as f64 * dt;
            times.push(t);
            references.push(reference_at(t));
            angles_out.push(angles.clone());
            let external: Vec<f64> = cycle_bias.iter().map(|b| b + noise_dist.sample(&mut rng)).collect();
            for _ in 0..drive.steps_per_sample {
                let reference = reference_at(step as f64 * dt);
                // Semi-implicit Euler: rates first, then angles.
                for p in 0..n {
                    let torque = chain_torque(geom, &reference, &angles, &external, p);
                    rates[p] += dt * (torque - drive.damping * rates[p]) / drive.inertia;
                }
                for p in 0..n {
                    angles[p] += dt * rates[p];
                    if angles[p].abs() >= limit {
                        angles[p] = angles[p].clamp(-limit, limit);
                        rates[p] = 0.0;
                    }
                }
                step += 1;
            }
        }
    }
    Ok(DriveResponse {
        samples_per_cycle: drive.samples_per_cycle,
        times,
        reference: references,
        angles: angles_out,
    })
}
