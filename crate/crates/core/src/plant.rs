//! Closed-form hydrodynamic stand-ins for the tank experiments.
//!
//! A gait is turned into swimming kinematics (frequency, tail-tip excursion,
//! Strouhal number, mean deflection) by simulating the CPG and running the
//! joint angles through planar forward kinematics of the tail links. The four
//! scenario objectives are then simple functions of those kinematics.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpg::{crossing_period, simulate, CouplingForm, CpgError, CpgParams};
use crate::ego::{Evaluation, Objective};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant setting `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("design vector must have 7 entries, got {0}")]
    DesignLength(usize),
    #[error(transparent)]
    Cpg(#[from] CpgError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> PlantError {
    PlantError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyGeometry {
    /// Overall body length (m).
    pub body_length: f64,
    /// Body depth `d` used to scale the tail amplitude (m).
    pub body_depth: f64,
    /// Length of the link distal to each actuated joint, head to tail (m).
    pub link_lengths: Vec<f64>,
}

impl Default for BodyGeometry {
    fn default() -> Self {
        Self::preset(5).expect("5-segment preset exists")
    }
}

impl BodyGeometry {
    /// The 1-, 3- and 5-segment bodies.
    pub fn preset(n_segments: usize) -> Result<Self, PlantError> {
        let link_lengths = match n_segments {
            1 => vec![0.3],
            3 => vec![0.1; 3],
            5 => vec![0.06; 5],
            n => {
                return Err(invalid(
                    "n_segments",
                    format!("presets exist for 1, 3 or 5 segments, got {n}"),
                ))
            }
        };
        Ok(Self {
            body_length: 0.725,
            body_depth: 0.10,
            link_lengths,
        })
    }

    pub fn n_segments(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.body_length.is_finite() && self.body_length > 0.0) {
            return Err(invalid("body_length", "must be > 0"));
        }
        if !(self.body_depth.is_finite() && self.body_depth > 0.0) {
            return Err(invalid("body_depth", "must be > 0"));
        }
        if self.link_lengths.is_empty() {
            return Err(invalid("link_lengths", "at least one link is required"));
        }
        if self.link_lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(invalid("link_lengths", "all lengths must be > 0"));
        }
        if self.link_lengths.iter().sum::<f64>() > self.body_length * (1.0 + 1e-12) {
            return Err(invalid("link_lengths", "links are longer than the body"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrouhalConvention {
    #[default]
    PeakToPeak,
    HalfAmplitude,
}

/// Calibration constants of the closed-form force models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConstants {
    pub c_t1: f64,
    pub c_d0: f64,
    pub c_d1: f64,
    pub c_m1: f64,
    #[serde(rename = "St_m")]
    pub st_m: f64,
    /// Peak fractional power saving from vortex synchronisation.
    pub eta_v: f64,
    /// Width of the synchronisation window (Hz).
    pub sigma_f: f64,
    #[serde(rename = "P0")]
    pub p0: f64,
    /// Strouhal number of the cylinder wake.
    pub shedding_strouhal: f64,
    pub strouhal: StrouhalConvention,
}

impl Default for PlantConstants {
    fn default() -> Self {
        Self {
            c_t1: 6.0,
            c_d0: 0.12,
            c_d1: 1.5,
            c_m1: 1.0,
            st_m: 0.5,
            eta_v: 0.29,
            sigma_f: 0.05,
            p0: 1.0,
            shedding_strouhal: 0.2,
            strouhal: StrouhalConvention::PeakToPeak,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Maximize mean thrust in uniform flow.
    #[default]
    #[serde(rename = "s1", alias = "S1", alias = "S1_thrust")]
    S1Thrust,
    /// Minimize thrust and yaw moment in tilted flow.
    #[serde(rename = "s2", alias = "S2", alias = "S2_sideflow")]
    S2Sideflow,
    /// Minimize power at near-zero thrust behind a cylinder.
    #[serde(rename = "s3", alias = "S3", alias = "S3_vortex")]
    S3Vortex,
    /// Maximize turning moment.
    #[serde(rename = "s4", alias = "S4", alias = "S4_turning")]
    S4Turning,
}

impl ScenarioKind {
    pub fn maximizes(&self) -> bool {
        matches!(self, ScenarioKind::S1Thrust | ScenarioKind::S4Turning)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::S1Thrust => "s1",
            ScenarioKind::S2Sideflow => "s2",
            ScenarioKind::S3Vortex => "s3",
            ScenarioKind::S4Turning => "s4",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = PlantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "s1_thrust" => Ok(ScenarioKind::S1Thrust),
            "s2" | "s2_sideflow" => Ok(ScenarioKind::S2Sideflow),
            "s3" | "s3_vortex" => Ok(ScenarioKind::S3Vortex),
            "s4" | "s4_turning" => Ok(ScenarioKind::S4Turning),
            _ => Err(invalid(
                "kind",
                format!("unknown scenario `{s}` (expected s1, s2, s3 or s4)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Free-stream speed (m/s).
    #[serde(rename = "U")]
    pub flow_speed: f64,
    /// Inflow angle relative to the body axis (rad).
    pub flow_angle: f64,
    pub cylinder_diameter: f64,
    pub lambda_torque: f64,
    /// Moment authority of the gait offset in side flow.
    pub kappa: f64,
    /// Weight on thrust outside the `eps_thrust` band.
    pub penalty: f64,
    pub eps_thrust: f64,
    pub constants: PlantConstants,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::S1Thrust,
            flow_speed: 0.3,
            flow_angle: 15f64.to_radians(),
            cylinder_diameter: 0.06,
            lambda_torque: 1.0,
            kappa: 1.0,
            penalty: 100.0,
            eps_thrust: 0.02,
            constants: PlantConstants::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Vortex shedding frequency behind the cylinder (Hz).
    pub fn shedding_frequency(&self) -> f64 {
        self.constants.shedding_strouhal * self.flow_speed / self.cylinder_diameter
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let c = &self.constants;
        if !(self.flow_speed.is_finite() && self.flow_speed >= 0.0) {
            return Err(invalid("U", "must be finite and >= 0"));
        }
        if !(0.0..=0.29).contains(&c.eta_v) {
            return Err(invalid("constants.eta_v", "must lie in [0, 0.29]"));
        }
        if !(c.sigma_f.is_finite() && c.sigma_f > 0.0) {
            return Err(invalid("constants.sigma_f", "must be > 0"));
        }
        if !(c.st_m.is_finite() && c.st_m > 0.0) {
            return Err(invalid("constants.St_m", "must be > 0"));
        }
        if !(self.cylinder_diameter.is_finite() && self.cylinder_diameter > 0.0) {
            return Err(invalid("cylinder_diameter", "must be > 0"));
        }
        if !self.flow_angle.is_finite() || self.flow_angle.abs() >= 0.5 * PI {
            return Err(invalid("flow_angle", "must lie in (-π/2, π/2)"));
        }
        for (field, v) in [
            ("lambda_torque", self.lambda_torque),
            ("kappa", self.kappa),
            ("penalty", self.penalty),
            ("eps_thrust", self.eps_thrust),
            ("constants.c_t1", c.c_t1),
            ("constants.c_d0", c.c_d0),
            ("constants.c_d1", c.c_d1),
            ("constants.c_m1", c.c_m1),
            ("constants.P0", c.p0),
            ("constants.shedding_strouhal", c.shedding_strouhal),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Steady swimming kinematics of a gait.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwimKinematics {
    /// Tail-beat frequency (Hz).
    pub f: f64,
    /// Tail-tip half amplitude (m).
    #[serde(rename = "A")]
    pub a: f64,
    /// Tail-tip peak-to-peak excursion (m).
    #[serde(rename = "A_pp")]
    pub a_pp: f64,
    #[serde(rename = "St")]
    pub st: f64,
    pub a_over_d: f64,
    /// Mean tail-tip heading (rad).
    pub b_eff: f64,
}

/// Integration settings for turning a gait into kinematics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub dt: f64,
    /// Intrinsic periods simulated and discarded before measuring.
    pub settle_periods: f64,
    /// Lower bound on the discarded time (s); coupling changes the
    /// limit-cycle radius and the chain needs time to reach it.
    pub min_settle_time: f64,
    /// Intrinsic periods measured.
    pub measure_periods: f64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            settle_periods: 3.0,
            min_settle_time: 10.0,
            measure_periods: 5.0,
        }
    }
}

const STILL_AMPLITUDE: f64 = 1e-9;

/// Kinematics from sampled joint angles `angles[joint][sample]`.
///
/// The head is held on the swimming axis; each link's heading is the sum of
/// the joint angles proximal to it.
pub fn kinematics_from_angles(
    angles: &[Vec<f64>],
    dt: f64,
    geom: &BodyGeometry,
    flow_speed: f64,
    convention: StrouhalConvention,
) -> Result<SwimKinematics, PlantError> {
    geom.validate()?;
    if angles.len() != geom.n_segments() {
        return Err(invalid(
            "link_lengths",
            format!("{} links for {} joint series", geom.n_segments(), angles.len()),
        ));
    }
    let len = angles.first().map_or(0, Vec::len);
    if len < 3 || angles.iter().any(|a| a.len() != len) {
        return Err(invalid("angles", "joint series must share a length of at least 3"));
    }
    let mut lateral = vec![0.0; len];
    let mut heading = vec![0.0; len];
    for (series, link) in angles.iter().zip(&geom.link_lengths) {
        for s in 0..len {
            heading[s] += series[s];
            lateral[s] += link * heading[s].sin();
        }
    }
    let (lo, hi) = lateral.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
        (lo.min(*y), hi.max(*y))
    });
    let a_pp = hi - lo;
    // The joint with the widest swing has the cleanest crossings.
    let lead = angles
        .iter()
        .max_by(|a, b| spread(a).total_cmp(&spread(b)))
        .expect("non-empty");
    let f = if a_pp < STILL_AMPLITUDE {
        0.0
    } else {
        1.0 / crossing_period(lead, dt)?
    };
    let (from, to) = if f > 0.0 { full_cycles(lead) } else { (0, len) };
    let b_eff = mean(&heading[from..to]);
    let a_pp = if f == 0.0 { 0.0 } else { a_pp };
    let st_amplitude = match convention {
        StrouhalConvention::PeakToPeak => a_pp,
        StrouhalConvention::HalfAmplitude => 0.5 * a_pp,
    };
    let st = strouhal(f, st_amplitude, flow_speed)?;
    Ok(SwimKinematics {
        f,
        a: 0.5 * a_pp,
        a_pp,
        st,
        a_over_d: a_pp / geom.body_depth,
        b_eff,
    })
}

fn mean(s: &[f64]) -> f64 {
    s.iter().sum::<f64>() / s.len() as f64
}

/// Sample range spanning whole cycles, between the first and last upward
/// crossings of the series mean; the full range if there are fewer than two.
fn full_cycles(series: &[f64]) -> (usize, usize) {
    let m = mean(series);
    let ups: Vec<usize> = series
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < m && w[1] >= m)
        .map(|(s, _)| s + 1)
        .collect();
    match (ups.first(), ups.last()) {
        (Some(a), Some(b)) if b > a => (*a, *b),
        _ => (0, series.len()),
    }
}

fn spread(s: &[f64]) -> f64 {
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    });
    hi - lo
}

fn strouhal(f: f64, amplitude: f64, flow_speed: f64) -> Result<f64, PlantError> {
    let numerator = f * amplitude;
    if numerator == 0.0 {
        return Ok(0.0);
    }
    if flow_speed <= 0.0 {
        return Err(invalid("U", "Strouhal number is undefined at zero flow speed"));
    }
    Ok(numerator / flow_speed)
}

/// Simulates the gait and measures its swimming kinematics.
///
/// Joint angles are the CPG commands `u` shifted by each oscillator's
/// measured offset, so the gait offset `b` bends the body.
pub fn derive_kinematics(
    params: &CpgParams,
    geom: &BodyGeometry,
    flow_speed: f64,
    convention: StrouhalConvention,
    sim: &SimulationSettings,
) -> Result<SwimKinematics, PlantError> {
    params.validate()?;
    geom.validate()?;
    if params.n_oscillators() != geom.n_segments() {
        return Err(invalid(
            "link_lengths",
            format!("{} links for {} oscillators", geom.n_segments(), params.n_oscillators()),
        ));
    }
    if !(sim.settle_periods >= 0.0 && sim.min_settle_time >= 0.0) {
        return Err(invalid("settle_periods", "settling time must be >= 0"));
    }
    if !(sim.measure_periods >= 2.0) {
        return Err(invalid("measure_periods", "at least 2 periods must be measured"));
    }
    let period = params.period();
    let settle = (sim.settle_periods * period).max(sim.min_settle_time);
    let traj = simulate(
        params,
        settle + sim.measure_periods * period,
        sim.dt,
        &params.steady_initial_state(),
    )?;
    let start = ((settle / sim.dt).round() as usize).min(traj.len().saturating_sub(3));
    let us: Vec<Vec<f64>> = (0..params.n_oscillators())
        .map(|i| traj.u_series(i)[start..].to_vec())
        .collect();
    let lead = us
        .iter()
        .max_by(|a, b| spread(a).total_cmp(&spread(b)))
        .expect("non-empty");
    let (from, to) = full_cycles(lead);
    let angles: Vec<Vec<f64>> = us
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let offset = mean(&traj.v_series(i)[start + from..start + to]);
            u[from..to].iter().map(|x| x + offset).collect()
        })
        .collect();
    kinematics_from_angles(&angles, traj.dt(), geom, flow_speed, convention)
}

/// Mean thrust coefficient as a function of Strouhal number and tail amplitude.
pub fn thrust_coefficient(st: f64, a_over_d: f64, c: &PlantConstants) -> f64 {
    c.c_t1 * st * st * a_over_d - c.c_d0 * (1.0 + c.c_d1 * a_over_d * a_over_d)
}

/// Swimming power with vortex synchronisation behind the cylinder.
pub fn vortex_power(f: f64, a_pp: f64, spec: &ScenarioSpec) -> f64 {
    let c = &spec.constants;
    let detune = (f - spec.shedding_frequency()) / c.sigma_f;
    c.p0 * f.powi(3) * a_pp * a_pp * (1.0 - c.eta_v * (-detune * detune).exp())
}

/// Turning moment coefficient.
pub fn turning_moment(st: f64, a_over_d: f64, b_eff: f64, c: &PlantConstants) -> f64 {
    let x = st / c.st_m;
    c.c_m1 * b_eff.sin() * st * (-x * x).exp() * a_over_d
}

/// Objective value and diagnostics of one gait in one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutcome {
    pub value: f64,
    pub kinematics: SwimKinematics,
    pub metrics: BTreeMap<String, f64>,
}

/// Scenario objective from already-measured kinematics.
pub fn scenario_value(spec: &ScenarioSpec, kin: &SwimKinematics) -> Result<ScenarioOutcome, PlantError> {
    spec.validate()?;
    let c = &spec.constants;
    let mut metrics = BTreeMap::from([
        ("f".to_string(), kin.f),
        ("A_pp".to_string(), kin.a_pp),
        ("St".to_string(), kin.st),
        ("a_over_d".to_string(), kin.a_over_d),
        ("b_eff".to_string(), kin.b_eff),
    ]);
    let value = match spec.kind {
        ScenarioKind::S1Thrust => {
            let ct = thrust_coefficient(kin.st, kin.a_over_d, c);
            metrics.insert("C_T".into(), ct);
            ct
        }
        ScenarioKind::S2Sideflow => {
            // Only the axial component of the stream sets the Strouhal number.
            let axial = spec.flow_speed * spec.flow_angle.cos();
            let st = if kin.st == 0.0 {
                0.0
            } else {
                kin.st * spec.flow_speed / axial
            };
            let ct = thrust_coefficient(st, kin.a_over_d, c);
            let cm = c.c_m1 * (spec.flow_angle.sin() - spec.kappa * kin.b_eff.sin());
            metrics.insert("St_axial".into(), st);
            metrics.insert("C_T".into(), ct);
            metrics.insert("C_M".into(), cm);
            ct.abs() + spec.lambda_torque * cm.abs()
        }
        ScenarioKind::S3Vortex => {
            let ct = thrust_coefficient(kin.st, kin.a_over_d, c);
            let power = vortex_power(kin.f, kin.a_pp, spec);
            metrics.insert("C_T".into(), ct);
            metrics.insert("power".into(), power);
            metrics.insert("f_shedding".into(), spec.shedding_frequency());
            power + spec.penalty * (ct.abs() - spec.eps_thrust).max(0.0)
        }
        ScenarioKind::S4Turning => {
            let cm = turning_moment(kin.st, kin.a_over_d, kin.b_eff, c);
            metrics.insert("C_M_turn".into(), cm);
            cm
        }
    };
    Ok(ScenarioOutcome {
        value,
        kinematics: *kin,
        metrics,
    })
}

/// Simulates the gait and scores it in the scenario.
pub fn scenario_objective(
    spec: &ScenarioSpec,
    params: &CpgParams,
    geom: &BodyGeometry,
    sim: &SimulationSettings,
) -> Result<ScenarioOutcome, PlantError> {
    spec.validate()?;
    let kin = derive_kinematics(params, geom, spec.flow_speed, spec.constants.strouhal, sim)?;
    scenario_value(spec, &kin)
}

/// Names of the design variables, in order.
pub const DESIGN_VARIABLES: [&str; 7] = ["omega", "epsilon_head", "epsilon_tail", "theta", "b", "h", "j"];

/// Default physical box for the design vector.
pub fn default_design_bounds() -> Vec<(f64, f64)> {
    vec![
        (2.0 * PI * 0.3, 2.0 * PI * 1.5),
        (0.0, 0.01),
        (0.0, 0.01),
        (0.0, 1.0),
        (-0.12, 0.12),
        (0.0, 0.2),
        (0.0, 0.2),
    ]
}

/// CPG parameters for design vector `(ω, ε_head, ε_tail, θ, b, h, j)`;
/// `ε` is interpolated linearly from head to tail.
pub fn design_to_params(x: &[f64], n_joints: usize) -> Result<CpgParams, PlantError> {
    if x.len() != 7 {
        return Err(PlantError::DesignLength(x.len()));
    }
    if n_joints == 0 {
        return Err(invalid("n_joints", "must be >= 1"));
    }
    let epsilon = (0..n_joints)
        .map(|i| {
            let t = if n_joints == 1 {
                0.0
            } else {
                i as f64 / (n_joints - 1) as f64
            };
            x[1] + (x[2] - x[1]) * t
        })
        .collect();
    let params = CpgParams {
        omega: x[0],
        epsilon,
        offset: vec![x[4]; n_joints],
        gain: 1.0,
        phase_lag: x[3],
        u_coupling: x[5],
        v_coupling: x[6],
        coupling_form: CouplingForm::PhaseLocking,
    };
    params.validate()?;
    Ok(params)
}

/// A scenario as an EGO objective over the 7-dimensional design vector.
///
/// Gaits whose simulation diverges score as non-finite (a failed trial); any
/// other error aborts the run.
#[derive(Clone, Debug, Default)]
pub struct ScenarioObjective {
    pub spec: ScenarioSpec,
    pub geometry: BodyGeometry,
    pub simulation: SimulationSettings,
}

impl ScenarioObjective {
    pub fn new(spec: ScenarioSpec) -> Self {
        Self {
            spec,
            ..Self::default()
        }
    }

    pub fn evaluate_design(&self, x: &[f64]) -> Result<ScenarioOutcome, PlantError> {
        let params = design_to_params(x, self.geometry.n_segments())?;
        scenario_objective(&self.spec, &params, &self.geometry, &self.simulation)
    }
}

impl Objective for ScenarioObjective {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, String> {
        match self.evaluate_design(x) {
            Ok(out) => Ok(Evaluation {
                value: out.value,
                metrics: Some(out.metrics),
            }),
            Err(PlantError::Cpg(CpgError::Divergence { .. })) => Ok(Evaluation::new(f64::NAN)),
            Err(e) => Err(e.to_string()),
        }
    }
}
