//! Chain of coupled Hopf-style oscillators used as the gait generator.
//!
//! Each oscillator carries a state `(u, v)` with a stable limit cycle of
//! radius `sqrt(epsilon)` centred on `(0, offset)`. Oscillator `i` receives
//! its predecessor's state rotated by the inter-joint phase `theta` on the `u`
//! channel and its successor's state on the `v` channel. The joint command is
//! `u` itself, in radians.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default integration step in seconds.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpgError {
    #[error("dimension mismatch: expected {expected} oscillators, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("integration diverged at step {step}")]
    Divergence { step: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OscillatorState {
    pub u: f64,
    pub v: f64,
}

impl OscillatorState {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Sign convention of the cross term `j (v_{i-1} - b) sin(theta)` in `u̇`.
///
/// `PhaseLocking` adds the term, so each oscillator trails its predecessor by
/// exactly `theta` in steady state. `AsPrinted` subtracts it; with that sign
/// the forward and backward couplings pull in opposite directions and the
/// chain settles near zero lag instead.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    #[default]
    PhaseLocking,
    AsPrinted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpgParams {
    /// Intrinsic angular frequency (rad/s).
    pub omega: f64,
    /// Squared limit-cycle radius, one entry per oscillator.
    pub epsilon: Vec<f64>,
    /// Offset `b` of the `v` channel, one entry per oscillator.
    pub offset: Vec<f64>,
    /// Radial gain `k`.
    pub gain: f64,
    /// Phase difference `theta` between adjacent oscillators (rad).
    pub phase_lag: f64,
    /// Coupling weight `h` on neighbouring `u` states.
    pub u_coupling: f64,
    /// Coupling weight `j` on neighbouring `v - b` states.
    pub v_coupling: f64,
    #[serde(default)]
    pub coupling_form: CouplingForm,
}

impl CpgParams {
    /// Chain of `n` identical oscillators with the default gain and couplings
    /// (`k = 1`, `h = j = 0.5`).
    pub fn chain(n: usize, omega: f64, epsilon: f64, offset: f64, phase_lag: f64) -> Self {
        Self {
            omega,
            epsilon: vec![epsilon; n],
            offset: vec![offset; n],
            gain: 1.0,
            phase_lag,
            u_coupling: 0.5,
            v_coupling: 0.5,
            coupling_form: CouplingForm::PhaseLocking,
        }
    }

    /// Same chain with both coupling weights set to zero.
    pub fn uncoupled(mut self) -> Self {
        self.u_coupling = 0.0;
        self.v_coupling = 0.0;
        self
    }

    pub fn n_oscillators(&self) -> usize {
        self.epsilon.len()
    }

    /// Intrinsic period `2π/ω` in seconds.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn validate(&self) -> Result<(), CpgError> {
        let invalid = |name, reason: &str| CpgError::InvalidParameter {
            name,
            reason: reason.to_string(),
        };
        if self.epsilon.is_empty() {
            return Err(invalid("epsilon", "at least one oscillator is required"));
        }
        if self.offset.len() != self.epsilon.len() {
            return Err(CpgError::Dimension {
                expected: self.epsilon.len(),
                actual: self.offset.len(),
            });
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(invalid("omega", "must be finite and > 0"));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(invalid("gain", "must be finite and > 0"));
        }
        if self.epsilon.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(invalid("epsilon", "entries must be finite and >= 0"));
        }
        if self.offset.iter().any(|b| !b.is_finite()) {
            return Err(invalid("offset", "entries must be finite"));
        }
        for (name, value) in [
            ("phase_lag", self.phase_lag),
            ("u_coupling", self.u_coupling),
            ("v_coupling", self.v_coupling),
        ] {
            if !value.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// A point on each oscillator's limit cycle, lagging by `theta` per joint.
    ///
    /// Oscillators with `epsilon = 0` start at their fixed point `(0, b)`.
    pub fn steady_initial_state(&self) -> Vec<OscillatorState> {
        self.epsilon
            .iter()
            .zip(&self.offset)
            .enumerate()
            .map(|(i, (eps, b))| {
                let r = eps.sqrt();
                let phase = -(i as f64) * self.phase_lag;
                OscillatorState::new(r * phase.cos(), b + r * phase.sin())
            })
            .collect()
    }
}

fn check_len(params: &CpgParams, actual: usize) -> Result<(), CpgError> {
    if actual != params.n_oscillators() {
        return Err(CpgError::Dimension {
            expected: params.n_oscillators(),
            actual,
        });
    }
    Ok(())
}

/// Time derivative of the network state.
pub fn derivative(state: &[OscillatorState], params: &CpgParams) -> Result<Vec<OscillatorState>, CpgError> {
    check_len(params, state.len())?;
    if params.offset.len() != params.epsilon.len() {
        return Err(CpgError::Dimension {
            expected: params.epsilon.len(),
            actual: params.offset.len(),
        });
    }
    let mut out = vec![OscillatorState::default(); state.len()];
    derivative_into(state, params, &mut out);
    Ok(out)
}

fn derivative_into(state: &[OscillatorState], p: &CpgParams, out: &mut [OscillatorState]) {
    let n = state.len();
    let k2 = p.gain * p.gain;
    let (sin_t, cos_t) = p.phase_lag.sin_cos();
    let cross_sign = match p.coupling_form {
        CouplingForm::PhaseLocking => 1.0,
        CouplingForm::AsPrinted => -1.0,
    };
    for i in 0..n {
        let s = state[i];
        let vb = s.v - p.offset[i];
        let radial = k2 * (p.epsilon[i] - (s.u * s.u + vb * vb));
        let mut du = s.u * radial - p.omega * vb;
        let mut dv = vb * radial + p.omega * s.u;
        if i > 0 {
            let prev = state[i - 1];
            let prev_vb = prev.v - p.offset[i - 1];
            du += p.u_coupling * prev.u * cos_t + cross_sign * p.v_coupling * prev_vb * sin_t;
        }
        if i + 1 < n {
            let next = state[i + 1];
            let next_vb = next.v - p.offset[i + 1];
            dv += p.u_coupling * next.u * sin_t + p.v_coupling * next_vb * cos_t;
        }
        out[i] = OscillatorState::new(du, dv);
    }
}

/// Sampled network trajectory. Sample `s` is at time `s * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    n_oscillators: usize,
    states: Vec<OscillatorState>,
}

impl Trajectory {
    /// Builds a trajectory from per-oscillator `u` and `v` series of equal length.
    pub fn from_channels(dt: f64, u: &[Vec<f64>], v: &[Vec<f64>]) -> Result<Self, CpgError> {
        if u.is_empty() || u.len() != v.len() {
            return Err(CpgError::Dimension {
                expected: u.len(),
                actual: v.len(),
            });
        }
        let len = u[0].len();
        if u.iter().chain(v).any(|c| c.len() != len) {
            return Err(CpgError::InsufficientData("channels must have equal length".into()));
        }
        let n = u.len();
        let mut states = Vec::with_capacity(len * n);
        for s in 0..len {
            for i in 0..n {
                states.push(OscillatorState::new(u[i][s], v[i][s]));
            }
        }
        Ok(Self {
            dt,
            n_oscillators: n,
            states,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_oscillators(&self) -> usize {
        self.n_oscillators
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.n_oscillators
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, sample: usize) -> f64 {
        sample as f64 * self.dt
    }

    pub fn state(&self, sample: usize) -> &[OscillatorState] {
        let n = self.n_oscillators;
        &self.states[sample * n..(sample + 1) * n]
    }

    pub fn last(&self) -> &[OscillatorState] {
        self.state(self.len() - 1)
    }

    pub fn u_series(&self, joint: usize) -> Vec<f64> {
        (0..self.len()).map(|s| self.state(s)[joint].u).collect()
    }

    pub fn v_series(&self, joint: usize) -> Vec<f64> {
        (0..self.len()).map(|s| self.state(s)[joint].v).collect()
    }

    /// Joint command in radians.
    pub fn angle(&self, sample: usize, joint: usize) -> f64 {
        self.state(sample)[joint].u
    }

    /// CSV with header `t,u_1,v_1,...,u_N,v_N,angle_1,...,angle_N`.
    pub fn to_csv(&self) -> String {
        let n = self.n_oscillators;
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",u_{i},v_{i}");
        }
        for i in 1..=n {
            let _ = write!(out, ",angle_{i}");
        }
        out.push('\n');
        for s in 0..self.len() {
            out.push_str(&crate::export::sig9(self.time(s)));
            let st = self.state(s);
            for o in st {
                out.push(',');
                out.push_str(&crate::export::sig9(o.u));
                out.push(',');
                out.push_str(&crate::export::sig9(o.v));
            }
            for j in 0..n {
                out.push(',');
                out.push_str(&crate::export::sig9(self.angle(s, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Integrates the network with classical fixed-step RK4.
pub fn simulate(
    params: &CpgParams,
    duration: f64,
    dt: f64,
    initial: &[OscillatorState],
) -> Result<Trajectory, CpgError> {
    params.validate()?;
    check_len(params, initial.len())?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CpgError::InvalidParameter {
            name: "dt",
            reason: "must be finite and > 0".into(),
        });
    }
    if !(duration.is_finite() && duration >= dt) {
        return Err(CpgError::InvalidParameter {
            name: "duration",
            reason: "must be finite and >= dt".into(),
        });
    }
    if dt > 0.01 * params.period() {
        log::debug!("dt = {dt} exceeds 1% of the intrinsic period {}", params.period());
    }
    let n = params.n_oscillators();
    let steps = (duration / dt).round() as usize;
    let mut states = Vec::with_capacity((steps + 1) * n);
    states.extend_from_slice(initial);

    let mut x = initial.to_vec();
    let zero = OscillatorState::default();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let mut tmp = vec![zero; n];
    let axpy = |tmp: &mut [OscillatorState], x: &[OscillatorState], k: &[OscillatorState], h: f64| {
        for ((t, a), b) in tmp.iter_mut().zip(x).zip(k) {
            t.u = a.u + h * b.u;
            t.v = a.v + h * b.v;
        }
    };
    for step in 1..=steps {
        derivative_into(&x, params, &mut k1);
        axpy(&mut tmp, &x, &k1, 0.5 * dt);
        derivative_into(&tmp, params, &mut k2);
        axpy(&mut tmp, &x, &k2, 0.5 * dt);
        derivative_into(&tmp, params, &mut k3);
        axpy(&mut tmp, &x, &k3, dt);
        derivative_into(&tmp, params, &mut k4);
        for i in 0..n {
            x[i].u += dt / 6.0 * (k1[i].u + 2.0 * k2[i].u + 2.0 * k3[i].u + k4[i].u);
            x[i].v += dt / 6.0 * (k1[i].v + 2.0 * k2[i].v + 2.0 * k3[i].v + k4[i].v);
        }
        if x.iter().any(|s| !s.is_finite()) {
            return Err(CpgError::Divergence { step });
        }
        states.extend_from_slice(&x);
    }
    Ok(Trajectory {
        dt,
        n_oscillators: n,
        states,
    })
}

/// Steady-state gait observables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitMetrics {
    /// Half peak-to-peak of `u`, per joint.
    pub amplitude: Vec<f64>,
    /// Oscillation frequency in Hz.
    pub frequency: f64,
    /// Lag of joint `i + 1` behind joint `i` (rad, wrapped to (-π, π]).
    pub phase_lag: Vec<f64>,
    /// Mean of `v`, per joint.
    pub offset: Vec<f64>,
}

/// Mean interval between upward crossings of the series' own mean, in seconds.
pub fn crossing_period(series: &[f64], dt: f64) -> Result<f64, CpgError> {
    let mean = series.iter().sum::<f64>() / series.len().max(1) as f64;
    let mut crossings = Vec::new();
    for (s, w) in series.windows(2).enumerate() {
        let (a, b) = (w[0] - mean, w[1] - mean);
        if a < 0.0 && b >= 0.0 && b > a {
            crossings.push((s as f64 + (-a) / (b - a)) * dt);
        }
    }
    if crossings.len() < 2 {
        return Err(CpgError::InsufficientData(format!(
            "{} upward zero crossing(s) after settling, need at least 2",
            crossings.len()
        )));
    }
    Ok((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

/// Lag of `b` behind `a` as a phase in (-π, π], from the cross-correlation peak
/// over one `period`.
pub fn correlation_phase_lag(a: &[f64], b: &[f64], dt: f64, period: f64) -> Result<f64, CpgError> {
    let span = (period / dt).round() as usize;
    if span < 4 || a.len() != b.len() || a.len() < 2 * span {
        return Err(CpgError::InsufficientData(
            "cross-correlation needs at least two periods of samples".into(),
        ));
    }
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let a: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let b: Vec<f64> = b.iter().map(|x| x - mb).collect();
    // Fixed window of `a` starting at `half`; lags cover (-half, half], which
    // is one full period of the (periodic) correlation.
    let half = span / 2 + 1;
    let window = a.len() - 2 * half;
    let corr = |lag: isize| -> f64 {
        let shift = (half as isize + lag) as usize;
        a[half..half + window]
            .iter()
            .zip(&b[shift..shift + window])
            .map(|(x, y)| x * y)
            .sum::<f64>()
    };
    let lim = (span / 2) as isize;
    let stride = (span / 64).max(1) as isize;
    let mut best = (f64::NEG_INFINITY, 0isize);
    let mut lag = -lim + 1;
    while lag <= lim {
        let c = corr(lag);
        if c > best.0 {
            best = (c, lag);
        }
        lag += stride;
    }
    let centre = best.1;
    for lag in (centre - stride).max(-lim + 1)..=(centre + stride).min(lim) {
        let c = corr(lag);
        if c > best.0 {
            best = (c, lag);
        }
    }
    let l = best.1;
    let lo = (l - 1).max(-(half as isize));
    let hi = (l + 1).min(half as isize);
    let (cm, c0, cp) = (corr(lo), best.0, corr(hi));
    let denom = cm - 2.0 * c0 + cp;
    let frac = if denom < 0.0 && lo == l - 1 && hi == l + 1 {
        0.5 * (cm - cp) / denom
    } else {
        0.0
    };
    let lag_s = (l as f64 + frac) * dt;
    Ok(wrap_phase(2.0 * PI * lag_s / period))
}

/// Wraps an angle into (-π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Amplitude, frequency, phase lags and offsets after discarding the first
/// `settle_fraction` of the trajectory.
pub fn extract_metrics(trajectory: &Trajectory, settle_fraction: f64) -> Result<GaitMetrics, CpgError> {
    if !(0.0..1.0).contains(&settle_fraction) {
        return Err(CpgError::InvalidParameter {
            name: "settle_fraction",
            reason: "must lie in [0, 1)".into(),
        });
    }
    let n = trajectory.n_oscillators();
    let start = (settle_fraction * trajectory.len() as f64).floor() as usize;
    if trajectory.len() - start < 3 {
        return Err(CpgError::InsufficientData("fewer than 3 samples after settling".into()));
    }
    let us: Vec<Vec<f64>> = (0..n).map(|i| trajectory.u_series(i)[start..].to_vec()).collect();
    let amplitude: Vec<f64> = us
        .iter()
        .map(|u| {
            let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(*x), hi.max(*x))
            });
            0.5 * (hi - lo)
        })
        .collect();
    let offset: Vec<f64> = (0..n)
        .map(|i| {
            let v = &trajectory.v_series(i)[start..];
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();

    // Frequency from the largest-amplitude channel.
    let lead = (0..n)
        .max_by(|a, b| amplitude[*a].total_cmp(&amplitude[*b]))
        .unwrap_or(0);
    let period = crossing_period(&us[lead], trajectory.dt())?;
    let frequency = 1.0 / period;

    let mut phase_lag = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let lag = if amplitude[i] > 0.0 && amplitude[i + 1] > 0.0 {
            correlation_phase_lag(&us[i], &us[i + 1], trajectory.dt(), period)?
        } else {
            0.0
        };
        phase_lag.push(lag);
    }
    Ok(GaitMetrics {
        amplitude,
        frequency,
        phase_lag,
        offset,
    })
}
