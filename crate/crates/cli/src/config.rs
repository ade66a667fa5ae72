//! Run configuration: one JSON file, dotted-path overrides and seed precedence.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use spinewave_core::cpg::{CouplingForm, CpgParams, OscillatorState};
use spinewave_core::ego::EgoConfig;
use spinewave_core::magnetics::RibcageGeometry;
use spinewave_core::plant::{default_design_bounds, BodyGeometry, ScenarioSpec, SimulationSettings};
use spinewave_core::{CpgError, EgoError, MagneticsError, PlantError};

use crate::CliError;

pub const SEED_ENV: &str = "SPINEWAVE_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub cpg: CpgSection,
    pub ribcage: RibcageGeometry,
    pub plant: PlantSection,
    pub ego: EgoConfig,
    pub output: OutputSection,
}

/// A chain of identical oscillators for `cpg-sim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpgSection {
    pub joints: usize,
    pub omega: f64,
    pub epsilon: f64,
    pub offset: f64,
    pub gain: f64,
    pub phase_lag: f64,
    pub u_coupling: f64,
    pub v_coupling: f64,
    pub coupling_form: CouplingForm,
    /// Simulated time (s).
    pub duration: f64,
    pub dt: f64,
    /// Initial `u` of every oscillator; `v` starts at the offset.
    pub initial_u: f64,
}

impl Default for CpgSection {
    fn default() -> Self {
        Self {
            joints: 5,
            omega: 2.0 * PI * 0.7,
            epsilon: 0.04,
            offset: 0.0,
            gain: 1.0,
            phase_lag: 0.6,
            u_coupling: 0.5,
            v_coupling: 0.5,
            coupling_form: CouplingForm::default(),
            duration: 20.0,
            dt: spinewave_core::cpg::DEFAULT_DT,
            initial_u: 0.1,
        }
    }
}

impl CpgSection {
    pub fn params(&self) -> CpgParams {
        CpgParams {
            gain: self.gain,
            u_coupling: self.u_coupling,
            v_coupling: self.v_coupling,
            coupling_form: self.coupling_form,
            ..CpgParams::chain(self.joints, self.omega, self.epsilon, self.offset, self.phase_lag)
        }
    }

    pub fn initial_state(&self) -> Vec<OscillatorState> {
        vec![OscillatorState::new(self.initial_u, self.offset); self.joints]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub scenario: ScenarioSpec,
    /// Body preset (1, 3 or 5 segments), used unless `geometry` is given.
    pub segments: usize,
    pub geometry: Option<BodyGeometry>,
    pub simulation: SimulationSettings,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::default(),
            segments: 5,
            geometry: None,
            simulation: SimulationSettings::default(),
        }
    }
}

impl PlantSection {
    pub fn body(&self) -> Result<BodyGeometry, PlantError> {
        match &self.geometry {
            Some(g) => Ok(g.clone()),
            None => BodyGeometry::preset(self.segments),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Angles in the `magnetics-sweep` torque curve.
    pub sweep_samples: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("spinewave-out"),
            sweep_samples: 181,
        }
    }
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let digest = Sha256::digest(c.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// EGO settings with the design bounds filled in and the run seed and
    /// scenario direction applied.
    pub fn ego_config(&self) -> EgoConfig {
        let mut ego = self.ego.clone();
        if ego.bounds.is_empty() {
            ego.bounds = default_design_bounds();
        }
        ego.seed = self.seed;
        ego.minimize = !self.plant.scenario.kind.maximizes();
        ego
    }

    /// Checks every section against its own rules.
    pub fn validate(&self) -> Result<(), CliError> {
        self.cpg.params().validate().map_err(|e| match e {
            CpgError::InvalidParameter { name, reason } => CliError::config(format!("cpg.{name}"), reason),
            other => CliError::config("cpg", other.to_string()),
        })?;
        if self.cpg.joints == 0 {
            return Err(CliError::config("cpg.joints", "must be >= 1"));
        }
        if !(self.cpg.duration > 0.0 && self.cpg.duration.is_finite()) {
            return Err(CliError::config("cpg.duration", "must be finite and > 0"));
        }
        if !(self.cpg.dt > 0.0 && self.cpg.dt < self.cpg.duration) {
            return Err(CliError::config("cpg.dt", "need 0 < dt < duration"));
        }
        self.ribcage.validate().map_err(|e| match e {
            MagneticsError::Geometry { field, reason } => CliError::config(format!("ribcage.{field}"), reason),
            other => CliError::config("ribcage", other.to_string()),
        })?;
        let plant_err = |section: &str, e: PlantError| match e {
            PlantError::Invalid { field, reason } => CliError::config(format!("plant.{section}{field}"), reason),
            other => CliError::config("plant", other.to_string()),
        };
        self.plant.scenario.validate().map_err(|e| plant_err("scenario.", e))?;
        let body = self.plant.body().map_err(|e| match e {
            PlantError::Invalid { reason, .. } => CliError::config("plant.segments", reason),
            other => plant_err("", other),
        })?;
        body.validate().map_err(|e| plant_err("geometry.", e))?;
        let sim = &self.plant.simulation;
        if !(sim.dt > 0.0 && sim.measure_periods >= 1.0 && sim.settle_periods >= 0.0 && sim.min_settle_time >= 0.0) {
            return Err(CliError::config(
                "plant.simulation",
                "need dt > 0, measure_periods >= 1 and non-negative settle settings",
            ));
        }
        let ego = self.ego_config();
        if ego.dim() != 7 {
            return Err(CliError::config(
                "ego.bounds",
                format!("the gait design vector has 7 entries, got {} bounds", ego.dim()),
            ));
        }
        ego.validate().map_err(|e| match e {
            EgoError::InvalidConfig { key, reason } => CliError::config(format!("ego.{key}"), reason),
            other => CliError::config("ego", other.to_string()),
        })?;
        if self.output.dir.as_os_str().is_empty() {
            return Err(CliError::config("output.dir", "must not be empty"));
        }
        if self.output.sweep_samples < 2 {
            return Err(CliError::config("output.sweep_samples", "must be >= 2"));
        }
        Ok(())
    }
}

/// Reads the config file (defaults when `path` is `None`), applies `--set`
/// overrides and deserializes the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut root = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::config("--config", format!("{} is not valid JSON: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    if !root.is_object() {
        return Err(CliError::config("--config", "top level must be a JSON object"));
    }
    for item in overrides {
        apply_override(&mut root, item)?;
    }
    parse(root)
}

pub fn parse(root: Value) -> Result<RunConfig, CliError> {
    serde_path_to_error::deserialize(root).map_err(|e| {
        let key = e.path().to_string();
        let key = if key == "." { "config".to_string() } else { key };
        CliError::config(key, e.into_inner().to_string())
    })
}

/// Applies one `key.path=value` override. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::config("--set", format!("expected key=value, got `{item}`")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::config("--set", format!("malformed key `{path}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for (depth, key) in keys.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| CliError::config(keys[..depth].join("."), "is not an object"))?;
        if depth + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("keys is non-empty")
}

/// Seed precedence: config file < `SPINEWAVE_SEED` < `--seed`.
pub fn resolve_seed(config: &mut RunConfig, env: Option<String>, flag: Option<u64>) -> Result<(), CliError> {
    if let Some(raw) = env {
        config.seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::config(SEED_ENV, format!("`{raw}` is not an unsigned 64-bit integer")))?;
    }
    if let Some(seed) = flag {
        config.seed = seed;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_nested_keys() {
        let mut root = json!({"ego": {"n_init": 3}});
        apply_override(&mut root, "ego.n_infill=20").unwrap();
        apply_override(&mut root, "output.dir=runs/a").unwrap();
        apply_override(&mut root, "plant.scenario.kind=\"s4\"").unwrap();
        assert_eq!(
            root,
            json!({"ego": {"n_init": 3, "n_infill": 20}, "output": {"dir": "runs/a"}, "plant": {"scenario": {"kind": "s4"}}})
        );
        let err = apply_override(&mut root, "ego.n_init.x=1").unwrap_err();
        assert!(err.to_string().contains("ego.n_init"), "{err}");
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        let err = parse(json!({"ego": {"n_infil": 3}})).unwrap_err();
        assert!(err.to_string().contains("ego"), "{err}");
        assert!(err.to_string().contains("n_infil"), "{err}");
        let err = parse(json!({"ribcage": {"rail_gap": "wide"}})).unwrap_err();
        assert!(err.to_string().contains("ribcage.rail_gap"), "{err}");
    }

    #[test]
    fn seed_precedence() {
        let mut c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        resolve_seed(&mut c, None, None).unwrap();
        assert_eq!(c.seed, 1);
        resolve_seed(&mut c, Some("2".into()), None).unwrap();
        assert_eq!(c.seed, 2);
        resolve_seed(&mut c, Some("3".into()), Some(4)).unwrap();
        assert_eq!(c.seed, 4);
        assert!(resolve_seed(&mut c, Some("x".into()), Some(4)).is_err());
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = parse(serde_json::from_str(&c.to_json()).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut moved = c.clone();
        moved.output.dir = "elsewhere".into();
        assert_eq!(moved.hash(), c.hash());
        moved.seed = 1;
        assert_ne!(moved.hash(), c.hash());
    }

    #[test]
    fn validation_names_the_key() {
        let mut c = RunConfig::default();
        c.ego.n_init = Some(2);
        assert!(c.validate().unwrap_err().to_string().contains("ego.n_init"));
        let mut c = RunConfig::default();
        c.plant.segments = 4;
        assert!(c.validate().unwrap_err().to_string().contains("plant.segments"));
        let mut c = RunConfig::default();
        c.ribcage.rail_gap = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("ribcage.rail_gap"));
    }
}
