//! Efficient global optimization: Latin-hypercube start, Kriging refits and
//! expected-improvement infill maximized by a genetic algorithm.
//!
//! The loop works in the unit cube; physical bounds are applied only when the
//! objective is called. Maximization problems are negated internally so the
//! infill criterion always targets the current minimum.

pub mod acquisition;
pub mod database;
pub mod ga;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kriging::{fit_from, FitConfig, KrigingError, KrigingModel, TrainingSet};
use crate::rng::stream;
use crate::sampling::lhs_sample;

pub use acquisition::{ei_from_moments, expected_improvement};
pub use database::{EvaluationDatabase, EvaluationRecord, JsonlSink, NullSink, RecordSink, Tag};
pub use ga::{ga_maximize, ga_maximize_seeded, Candidate, GaConfig, GaOutcome};

/// Infill points closer than this (max-abs, unit cube) to existing data are
/// perturbed before evaluation.
pub const INFILL_DUPLICATE_TOL: f64 = 1e-9;
/// Half-width of the uniform jitter applied to duplicate infill points.
pub const INFILL_JITTER: f64 = 1e-6;
/// Ranked GA candidates tried when the objective returns non-finite values.
const MAX_INFILL_ATTEMPTS: usize = 5;

#[derive(Debug, Error)]
pub enum EgoError {
    #[error("invalid configuration `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },
    #[error("initial design point {index} returned a non-finite objective value")]
    NonFiniteInitial { index: usize },
    #[error("no finite objective value among {attempts} infill candidates at iteration {iter}")]
    InfillExhausted { iter: usize, attempts: usize },
    #[error("objective failed: {0}")]
    Objective(String),
    #[error("database does not match this configuration: {0}")]
    DatabaseMismatch(String),
    #[error(transparent)]
    Kriging(#[from] KrigingError),
    #[error("could not persist evaluation: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(key: &str, reason: impl Into<String>) -> EgoError {
    EgoError::InvalidConfig {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Result of one call to the real objective.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub metrics: Option<BTreeMap<String, f64>>,
}

impl Evaluation {
    pub fn new(value: f64) -> Self {
        Self { value, metrics: None }
    }
}

/// A black-box objective over physical design vectors.
///
/// `Err` aborts the run (the database keeps everything evaluated so far); a
/// non-finite `value` is treated as a failed trial.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, String>;
}

impl<F: FnMut(&[f64]) -> f64> Objective for F {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, String> {
        Ok(Evaluation::new(self(x)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoConfig {
    /// Physical `(lo, hi)` per design variable.
    pub bounds: Vec<(f64, f64)>,
    /// Initial Latin-hypercube size; defaults to `10 * dim`.
    pub n_init: Option<usize>,
    /// Number of infill evaluations; defaults to `5 * dim`.
    pub n_infill: Option<usize>,
    pub ga: GaConfig,
    pub kriging: FitConfig,
    /// Likelihood starts for refits after the first (the previous `θ` is one
    /// of them); `None` uses `kriging.n_starts`.
    pub refit_starts: Option<usize>,
    pub seed: u64,
    pub minimize: bool,
    /// Unit-cube dimensions spanned by the convergence-diagnostic grid.
    pub surface_dims: (usize, usize),
    pub surface_resolution: usize,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            bounds: Vec::new(),
            n_init: None,
            n_infill: None,
            ga: GaConfig::default(),
            kriging: FitConfig::default(),
            refit_starts: Some(3),
            seed: 0,
            minimize: true,
            surface_dims: (0, 1),
            surface_resolution: 50,
        }
    }
}

impl EgoConfig {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            bounds,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn maximize(mut self) -> Self {
        self.minimize = false;
        self
    }

    pub fn with_budget(mut self, n_init: usize, n_infill: usize) -> Self {
        self.n_init = Some(n_init);
        self.n_infill = Some(n_infill);
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn n_init(&self) -> usize {
        self.n_init.unwrap_or(10 * self.dim())
    }

    pub fn n_infill(&self) -> usize {
        self.n_infill.unwrap_or(5 * self.dim())
    }

    pub fn validate(&self) -> Result<(), EgoError> {
        let dim = self.dim();
        if dim == 0 {
            return Err(invalid("bounds", "at least one design variable is required"));
        }
        for (k, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(
                    &format!("bounds[{k}]"),
                    format!("need finite lo < hi, got ({lo}, {hi})"),
                ));
            }
        }
        if self.n_init() < dim + 1 {
            return Err(invalid("n_init", format!("must be >= dim + 1 = {}", dim + 1)));
        }
        if let Err((field, reason)) = self.ga.validate() {
            return Err(invalid(&format!("ga.{field}"), reason));
        }
        if self.kriging.n_starts == 0 {
            return Err(invalid("kriging.n_starts", "must be >= 1"));
        }
        if self.refit_starts == Some(0) {
            return Err(invalid("refit_starts", "must be >= 1"));
        }
        if self.surface_resolution < 2 {
            return Err(invalid("surface_resolution", "must be >= 2"));
        }
        let (a, b) = self.surface_dims;
        if dim >= 2 && !(a < b && b < dim) {
            return Err(invalid("surface_dims", format!("need i < j < {dim}, got ({a}, {b})")));
        }
        Ok(())
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn to_physical(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| (lo + v * (hi - lo)).clamp(*lo, *hi))
            .collect()
    }

    fn internal(&self, y: f64) -> f64 {
        if self.minimize {
            y
        } else {
            -y
        }
    }

    fn better(&self, a: f64, b: f64) -> f64 {
        if self.minimize {
            a.min(b)
        } else {
            a.max(b)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iter: usize,
    pub best_so_far: f64,
    pub ei: f64,
    pub surface_delta: f64,
}

/// A design whose objective evaluation returned a non-finite value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedEvaluation {
    pub iter: usize,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoResult {
    pub best_x: Vec<f64>,
    pub best_y: f64,
    pub history: Vec<IterationSummary>,
    pub failures: Vec<FailedEvaluation>,
}

#[derive(Debug)]
pub struct EgoOutcome {
    pub result: EgoResult,
    pub database: EvaluationDatabase,
    /// Model fitted to the complete database.
    pub model: KrigingModel,
}

/// Runs the full loop from scratch without persistence.
pub fn run_ego<O: Objective + ?Sized>(objective: &mut O, config: &EgoConfig) -> Result<EgoOutcome, EgoError> {
    resume_ego(objective, config, EvaluationDatabase::new(), &mut NullSink)
}

/// Continues a run from `prior` (possibly empty), handing every new record to
/// `sink` as soon as it is complete.
///
/// Given the same configuration, a run resumed from any prefix of a database
/// produces the same records as an uninterrupted run.
pub fn resume_ego<O: Objective + ?Sized>(
    objective: &mut O,
    config: &EgoConfig,
    prior: EvaluationDatabase,
    sink: &mut dyn RecordSink,
) -> Result<EgoOutcome, EgoError> {
    config.validate()?;
    let dim = config.dim();
    let n_init = config.n_init();
    let n_infill = config.n_infill();
    let design = lhs_sample(n_init, dim, config.seed);
    check_prior(&prior, config, &design)?;

    let mut db = prior;
    let mut failures = Vec::new();

    // Initial design.
    for (index, u) in design.iter().enumerate().skip(db.len()) {
        let x = config.to_physical(u);
        let eval = objective.evaluate(&x).map_err(EgoError::Objective)?;
        if !eval.value.is_finite() {
            return Err(EgoError::NonFiniteInitial { index });
        }
        let best = db
            .records()
            .last()
            .map_or(eval.value, |r| config.better(r.best_so_far, eval.value));
        let record = EvaluationRecord {
            iter: 0,
            tag: Tag::Init,
            x,
            y: eval.value,
            best_so_far: best,
            ei: None,
            surface_delta: None,
            model_theta: None,
            metrics: finite_metrics(eval.metrics),
        };
        sink.append(&record)?;
        db.push(record);
    }

    let mut stage = db.count(Tag::Infill);
    let warm = db.records().last().and_then(|r| r.model_theta.clone());
    let mut model = fit_stage(&db, config, stage, warm.as_deref())?;
    let mut grid = surface_grid(&model, config);

    while stage < n_infill {
        let iter = stage + 1;
        let f_min = db
            .records()
            .iter()
            .map(|r| config.internal(r.y))
            .fold(f64::INFINITY, f64::min);
        let ei_of = |u: &[f64]| ei_from_moments_at(&model, u, f_min);
        let incumbent = db
            .records()
            .iter()
            .min_by(|a, b| config.internal(a.y).total_cmp(&config.internal(b.y)))
            .map(|r| config.to_unit(&r.x))
            .into_iter()
            .collect::<Vec<_>>();
        let ga_seed = stream(config.seed, "ga", iter as u64).random::<u64>();
        let outcome = ga_maximize_seeded(ei_of, dim, &config.ga, ga_seed, &incumbent);

        let mut existing: Vec<Vec<f64>> = db.records().iter().map(|r| config.to_unit(&r.x)).collect();
        let mut jitter_rng = stream(config.seed, "jitter", iter as u64);
        let mut accepted = None;
        for candidate in outcome.ranked.iter().take(MAX_INFILL_ATTEMPTS) {
            let mut u = candidate.x.clone();
            let mut tries = 0;
            while is_duplicate(&u, &existing) {
                tries += 1;
                if tries > 100 {
                    break;
                }
                for v in u.iter_mut() {
                    *v = (*v + jitter_rng.random_range(-INFILL_JITTER..=INFILL_JITTER)).clamp(0.0, 1.0);
                }
                log::info!("iteration {iter}: infill point duplicates existing data, jittered (try {tries})");
            }
            let x = config.to_physical(&u);
            let ei = ei_of(&u);
            let eval = objective.evaluate(&x).map_err(EgoError::Objective)?;
            if eval.value.is_finite() {
                accepted = Some((x, ei, eval));
                break;
            }
            log::warn!("iteration {iter}: non-finite objective at {x:?}; trying the next EI candidate");
            existing.push(u);
            failures.push(FailedEvaluation { iter, x });
        }
        let Some((x, ei, eval)) = accepted else {
            return Err(EgoError::InfillExhausted {
                iter,
                attempts: MAX_INFILL_ATTEMPTS.min(outcome.ranked.len()),
            });
        };

        let best = db
            .records()
            .last()
            .map_or(eval.value, |r| config.better(r.best_so_far, eval.value));
        let mut record = EvaluationRecord {
            iter,
            tag: Tag::Infill,
            x,
            y: eval.value,
            best_so_far: best,
            ei: Some(ei),
            surface_delta: None,
            model_theta: Some(model.theta().to_vec()),
            metrics: finite_metrics(eval.metrics),
        };
        db.push(record.clone());
        let refit = fit_stage(&db, config, iter, Some(model.theta()))?;
        let next_grid = surface_grid(&refit, config);
        let delta = grid
            .iter()
            .zip(&next_grid)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        record.surface_delta = Some(delta);
        sink.append(&record)?;
        db.replace_last(record);
        model = refit;
        grid = next_grid;
        stage = iter;
    }

    let best = db
        .records()
        .iter()
        .min_by(|a, b| config.internal(a.y).total_cmp(&config.internal(b.y)))
        .expect("database is non-empty");
    let history = db
        .records()
        .iter()
        .filter(|r| r.tag == Tag::Infill)
        .map(|r| IterationSummary {
            iter: r.iter,
            best_so_far: r.best_so_far,
            ei: r.ei.unwrap_or(0.0),
            surface_delta: r.surface_delta.unwrap_or(0.0),
        })
        .collect();
    Ok(EgoOutcome {
        result: EgoResult {
            best_x: best.x.clone(),
            best_y: best.y,
            history,
            failures,
        },
        database: db,
        model,
    })
}

fn ei_from_moments_at(model: &KrigingModel, u: &[f64], f_min: f64) -> f64 {
    model
        .predict(u)
        .map(|p| ei_from_moments(p.mean, p.sd, f_min))
        .unwrap_or(0.0)
}

fn finite_metrics(m: Option<BTreeMap<String, f64>>) -> Option<BTreeMap<String, f64>> {
    m.map(|m| m.into_iter().filter(|(_, v)| v.is_finite()).collect())
}

fn is_duplicate(u: &[f64], existing: &[Vec<f64>]) -> bool {
    existing
        .iter()
        .any(|e| e.iter().zip(u).all(|(a, b)| (a - b).abs() <= INFILL_DUPLICATE_TOL))
}

fn check_prior(prior: &EvaluationDatabase, config: &EgoConfig, design: &[Vec<f64>]) -> Result<(), EgoError> {
    let n_init = config.n_init();
    if prior.len() > n_init + config.n_infill() {
        return Err(EgoError::DatabaseMismatch(format!(
            "{} records exceed the budget of {}",
            prior.len(),
            n_init + config.n_infill()
        )));
    }
    for (i, r) in prior.records().iter().enumerate() {
        if r.x.len() != config.dim() {
            return Err(EgoError::DatabaseMismatch(format!(
                "record {i} has {} coordinates",
                r.x.len()
            )));
        }
        let in_bounds =
            r.x.iter()
                .zip(&config.bounds)
                .all(|(v, (lo, hi))| (*lo..=*hi).contains(v));
        if !in_bounds {
            return Err(EgoError::DatabaseMismatch(format!(
                "record {i} lies outside the bounds"
            )));
        }
        let expected = if i < n_init {
            (Tag::Init, 0)
        } else {
            (Tag::Infill, i - n_init + 1)
        };
        if (r.tag, r.iter) != expected {
            return Err(EgoError::DatabaseMismatch(format!(
                "record {i} is {:?} iteration {}, expected {:?} iteration {}",
                r.tag, r.iter, expected.0, expected.1
            )));
        }
        if i < n_init && r.x != config.to_physical(&design[i]) {
            return Err(EgoError::DatabaseMismatch(format!(
                "initial record {i} differs from the seeded design (different seed or bounds?)"
            )));
        }
    }
    Ok(())
}

/// Fits the surrogate to the whole database for infill stage `stage`.
fn fit_stage(
    db: &EvaluationDatabase,
    config: &EgoConfig,
    stage: usize,
    warm: Option<&[f64]>,
) -> Result<KrigingModel, EgoError> {
    let mut training: Option<TrainingSet> = None;
    for r in db.records() {
        let u = config.to_unit(&r.x);
        let y = config.internal(r.y);
        match training.as_mut() {
            None => training = Some(TrainingSet::new(vec![u], vec![y])?),
            Some(t) => t.push(&u, y)?,
        }
    }
    let training = training.ok_or(KrigingError::Empty)?;
    let mut fit_config = config.kriging.clone();
    fit_config.seed = stream(config.seed, "fit", stage as u64).random::<u64>();
    if stage > 0 {
        if let Some(n) = config.refit_starts {
            fit_config.n_starts = n;
        }
    }
    Ok(fit_from(training, &fit_config, warm)?)
}

/// Model means on the diagnostic grid (remaining coordinates held at 0.5).
pub fn surface_grid(model: &KrigingModel, config: &EgoConfig) -> Vec<f64> {
    let dim = config.dim();
    let res = config.surface_resolution;
    let step = 1.0 / (res - 1) as f64;
    let points: Vec<Vec<f64>> = if dim == 1 {
        (0..res).map(|i| vec![i as f64 * step]).collect()
    } else {
        let (a, b) = config.surface_dims;
        (0..res * res)
            .map(|k| {
                let mut u = vec![0.5; dim];
                u[a] = (k / res) as f64 * step;
                u[b] = (k % res) as f64 * step;
                u
            })
            .collect()
    };
    points
        .par_iter()
        .map(|u| model.predict(u).map(|p| p.mean).unwrap_or(f64::NAN))
        .collect()
}
