//! Ordinary Kriging with an anisotropic Gaussian correlation.
//!
//! The trend is a constant `beta`, the correlation between two points is
//! `exp(-Σ θ_k d_k²)` over per-coordinate distances in the unit cube, and the
//! correlation lengths `θ` maximize the concentrated log-likelihood.

mod simplex;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream;
use crate::sampling::lhs_with;
pub use simplex::SimplexOptions;

/// Two design points closer than this (max-abs) are duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// Default diagonal nugget, in correlation units.
pub const DEFAULT_NUGGET: f64 = 1e-10;

/// Floor on the process variance inside the logarithm of the likelihood.
const SIGMA2_LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrigingError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("training set is empty")]
    Empty,
    #[error("design point {row} has coordinate {col} = {value} outside [0, 1]")]
    OutsideUnitCube { row: usize, col: usize, value: f64 },
    #[error("non-finite value in training row {row}")]
    NonFinite { row: usize },
    #[error("design point {second} duplicates point {first}")]
    DuplicatePoint { first: usize, second: usize },
    #[error("invalid correlation parameters: {0}")]
    InvalidTheta(String),
    #[error("correlation matrix is not positive definite")]
    Conditioning,
    #[error("likelihood could not be evaluated at any of {starts} start point(s)")]
    FitFailed { starts: usize },
    #[error("invalid model snapshot: {0}")]
    Snapshot(String),
}

/// Design points in `[0, 1]^dim` with their observed responses.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self, KrigingError> {
        if rows.is_empty() {
            return Err(KrigingError::Empty);
        }
        if rows.len() != y.len() {
            return Err(KrigingError::Dimension {
                expected: rows.len(),
                actual: y.len(),
            });
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(KrigingError::Dimension { expected: 1, actual: 0 });
        }
        let mut set = Self {
            dim,
            x: Vec::with_capacity(rows.len() * dim),
            y: Vec::with_capacity(rows.len()),
        };
        for (row, value) in rows.into_iter().zip(y) {
            set.push(&row, value)?;
        }
        Ok(set)
    }

    /// Appends one observation, rejecting duplicates.
    pub fn push(&mut self, x: &[f64], y: f64) -> Result<(), KrigingError> {
        let row = self.len();
        if x.len() != self.dim {
            return Err(KrigingError::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(KrigingError::NonFinite { row });
        }
        if let Some((col, value)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(KrigingError::OutsideUnitCube {
                row,
                col,
                value: *value,
            });
        }
        if let Some(first) = (0..row).find(|i| {
            self.point(*i)
                .iter()
                .zip(x)
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL)
        }) {
            return Err(KrigingError::DuplicatePoint { first, second: row });
        }
        self.x.extend_from_slice(x);
        self.y.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks(self.dim)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `max(y) - min(y)`.
    pub fn y_range(&self) -> f64 {
        let (lo, hi) = self
            .y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        hi - lo
    }
}

fn check_theta(theta: &[f64], dim: usize) -> Result<(), KrigingError> {
    if theta.len() != dim {
        return Err(KrigingError::Dimension {
            expected: dim,
            actual: theta.len(),
        });
    }
    if theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(KrigingError::InvalidTheta(format!(
            "all entries must be finite and > 0, got {theta:?}"
        )));
    }
    Ok(())
}

/// Gaussian correlation `Π_k exp(-θ_k (xi_k - xj_k)²)`.
pub fn correlation(theta: &[f64], xi: &[f64], xj: &[f64]) -> Result<f64, KrigingError> {
    if xi.len() != xj.len() {
        return Err(KrigingError::Dimension {
            expected: xi.len(),
            actual: xj.len(),
        });
    }
    check_theta(theta, xi.len())?;
    Ok(correlation_unchecked(theta, xi, xj))
}

#[inline]
fn correlation_unchecked(theta: &[f64], xi: &[f64], xj: &[f64]) -> f64 {
    let s: f64 = theta
        .iter()
        .zip(xi.iter().zip(xj))
        .map(|(t, (a, b))| t * (a - b) * (a - b))
        .sum();
    (-s).exp()
}

/// Squared per-coordinate differences for every pair `i < j`.
struct PairDistances {
    dim: usize,
    sq: Vec<f64>,
}

impl PairDistances {
    fn new(training: &TrainingSet) -> Self {
        let n = training.len();
        let dim = training.dim();
        let mut sq = Vec::with_capacity(n * n.saturating_sub(1) / 2 * dim);
        for i in 0..n {
            for j in (i + 1)..n {
                for (a, b) in training.point(i).iter().zip(training.point(j)) {
                    sq.push((a - b) * (a - b));
                }
            }
        }
        Self { dim, sq }
    }
}

/// Profiled likelihood at a given `θ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Likelihood {
    /// `[N ln σ̂² + ln|R|] / 2`, the quantity to minimize.
    pub value: f64,
    pub beta_hat: f64,
    pub sigma2_hat: f64,
}

struct Factor {
    /// Transposed Cholesky factor (upper triangular), column-major.
    upper: DMatrix<f64>,
    ln_det: f64,
    r_inv_ones: DVector<f64>,
    ones_r_inv_ones: f64,
    beta: f64,
    sigma2: f64,
    weights: DVector<f64>,
}

fn factorize(
    theta: &[f64],
    training: &TrainingSet,
    nugget: f64,
    pairs: &PairDistances,
    fixed: Option<(f64, f64)>,
) -> Result<Factor, KrigingError> {
    let n = training.len();
    let mut r = DMatrix::<f64>::identity(n, n);
    let mut idx = 0;
    for i in 0..n {
        r[(i, i)] = 1.0 + nugget;
        for j in (i + 1)..n {
            let d = &pairs.sq[idx * pairs.dim..(idx + 1) * pairs.dim];
            let s: f64 = theta.iter().zip(d).map(|(t, d)| t * d).sum();
            let c = (-s).exp();
            r[(i, j)] = c;
            r[(j, i)] = c;
            idx += 1;
        }
    }
    let chol = r.cholesky().ok_or(KrigingError::Conditioning)?;
    let l = chol.l_dirty();
    let ln_det = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
    if !ln_det.is_finite() {
        return Err(KrigingError::Conditioning);
    }
    let ones = DVector::from_element(n, 1.0);
    let y = DVector::from_column_slice(training.y());
    let r_inv_ones = chol.solve(&ones);
    let ones_r_inv_ones = r_inv_ones.sum();
    if !(ones_r_inv_ones.is_finite() && ones_r_inv_ones > 0.0) {
        return Err(KrigingError::Conditioning);
    }
    let (beta, sigma2, weights) = match fixed {
        Some((beta, sigma2)) => {
            let resid = y.add_scalar(-beta);
            (beta, sigma2, chol.solve(&resid))
        }
        None => {
            let beta = r_inv_ones.dot(&y) / ones_r_inv_ones;
            let resid = y.add_scalar(-beta);
            let weights = chol.solve(&resid);
            let sigma2 = (resid.dot(&weights) / n as f64).max(0.0);
            (beta, sigma2, weights)
        }
    };
    if !(beta.is_finite() && sigma2.is_finite()) {
        return Err(KrigingError::Conditioning);
    }
    Ok(Factor {
        upper: chol.unpack().transpose(),
        ln_det,
        r_inv_ones,
        ones_r_inv_ones,
        beta,
        sigma2,
        weights,
    })
}

fn likelihood_of(factor: &Factor, n: usize) -> f64 {
    0.5 * (n as f64 * factor.sigma2.max(SIGMA2_LOG_FLOOR).ln() + factor.ln_det)
}

/// Negative concentrated log-likelihood `[N ln σ̂² + ln|R|] / 2` with the
/// implied trend and process variance.
pub fn neg_loglik(theta: &[f64], training: &TrainingSet, nugget: f64) -> Result<Likelihood, KrigingError> {
    check_theta(theta, training.dim())?;
    if !(nugget.is_finite() && nugget >= 0.0) {
        return Err(KrigingError::InvalidTheta(format!("nugget must be >= 0, got {nugget}")));
    }
    let pairs = PairDistances::new(training);
    let f = factorize(theta, training, nugget, &pairs, None)?;
    Ok(Likelihood {
        value: likelihood_of(&f, training.len()),
        beta_hat: f.beta,
        sigma2_hat: f.sigma2,
    })
}

/// Predictive-variance formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceForm {
    /// `σ̂²[1 - rᵀR⁻¹r + (1 - 1ᵀR⁻¹r)² / 1ᵀR⁻¹1]`.
    #[default]
    WithTrendTerm,
    /// `σ̂²[1 - rᵀR⁻¹r]`.
    Simple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Search box for `log10 θ_k`.
    pub log10_theta_bounds: (f64, f64),
    pub n_starts: usize,
    /// Diagonal nugget added to the correlation matrix.
    pub nugget: f64,
    /// Seed for the multistart design.
    pub seed: u64,
    /// Likelihood evaluations allowed per start.
    pub max_evals: usize,
    pub variance_form: VarianceForm,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            log10_theta_bounds: (-3.0, 3.0),
            n_starts: 8,
            nugget: DEFAULT_NUGGET,
            seed: 0,
            max_evals: 400,
            variance_form: VarianceForm::default(),
        }
    }
}

impl FitConfig {
    pub fn with_nugget(mut self, nugget: f64) -> Self {
        self.nugget = nugget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Kriging prediction at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub sd: f64,
}

/// A fitted ordinary-Kriging surrogate. Immutable once built.
#[derive(Clone, Debug)]
pub struct KrigingModel {
    theta: Vec<f64>,
    beta_hat: f64,
    sigma2_hat: f64,
    nugget: f64,
    neg_loglik: f64,
    variance_form: VarianceForm,
    training: TrainingSet,
    upper: DMatrix<f64>,
    r_inv_ones: DVector<f64>,
    ones_r_inv_ones: f64,
    weights: DVector<f64>,
}

impl KrigingModel {
    fn from_factor(training: TrainingSet, theta: Vec<f64>, nugget: f64, form: VarianceForm, f: Factor) -> Self {
        let n = training.len();
        Self {
            neg_loglik: likelihood_of(&f, n),
            theta,
            beta_hat: f.beta,
            sigma2_hat: f.sigma2,
            nugget,
            variance_form: form,
            training,
            upper: f.upper,
            r_inv_ones: f.r_inv_ones,
            ones_r_inv_ones: f.ones_r_inv_ones,
            weights: f.weights,
        }
    }

    /// Builds the model at a fixed `θ` (no likelihood search).
    pub fn with_theta(training: TrainingSet, theta: &[f64], nugget: f64) -> Result<Self, KrigingError> {
        check_theta(theta, training.dim())?;
        let pairs = PairDistances::new(&training);
        let f = factorize(theta, &training, nugget, &pairs, None)?;
        Ok(Self::from_factor(
            training,
            theta.to_vec(),
            nugget,
            VarianceForm::default(),
            f,
        ))
    }

    pub fn with_variance_form(mut self, form: VarianceForm) -> Self {
        self.variance_form = form;
        self
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn beta_hat(&self) -> f64 {
        self.beta_hat
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn neg_loglik(&self) -> f64 {
        self.neg_loglik
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn dim(&self) -> usize {
        self.training.dim()
    }

    /// `1ᵀR⁻¹1`, the precision of the trend estimate.
    pub fn trend_precision(&self) -> f64 {
        self.ones_r_inv_ones
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, KrigingError> {
        if x.len() != self.dim() {
            return Err(KrigingError::Dimension {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let n = self.training.len();
        let r: Vec<f64> = self
            .training
            .points()
            .map(|p| correlation_unchecked(&self.theta, x, p))
            .collect();
        let mean = self.beta_hat + r.iter().zip(self.weights.iter()).map(|(a, b)| a * b).sum::<f64>();

        // w = L⁻¹ r by forward substitution on the stored upper factor.
        let mut w = vec![0.0; n];
        for i in 0..n {
            let col = self.upper.column(i);
            let mut acc = r[i];
            for k in 0..i {
                acc -= col[k] * w[k];
            }
            w[i] = acc / col[i];
        }
        let quad: f64 = w.iter().map(|v| v * v).sum();
        let mut ratio = 1.0 - quad;
        if self.variance_form == VarianceForm::WithTrendTerm {
            let ones_r: f64 = r.iter().zip(self.r_inv_ones.iter()).map(|(a, b)| a * b).sum();
            ratio += (1.0 - ones_r).powi(2) / self.ones_r_inv_ones;
        }
        let var = (self.sigma2_hat * ratio).max(0.0);
        Ok(Prediction { mean, sd: var.sqrt() })
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            dim: self.dim(),
            n: self.training.len(),
            theta: self.theta.clone(),
            beta_hat: self.beta_hat,
            sigma2_hat: self.sigma2_hat,
            nugget: self.nugget,
            x: self.training.points().map(<[f64]>::to_vec).collect(),
            y: self.training.y().to_vec(),
        }
    }

    pub fn from_snapshot(s: &ModelSnapshot) -> Result<Self, KrigingError> {
        if s.x.len() != s.n || s.y.len() != s.n {
            return Err(KrigingError::Snapshot(format!(
                "n = {} but X has {} rows and y has {} entries",
                s.n,
                s.x.len(),
                s.y.len()
            )));
        }
        if s.x.iter().any(|r| r.len() != s.dim) {
            return Err(KrigingError::Snapshot(format!("rows of X must have {} columns", s.dim)));
        }
        let training = TrainingSet::new(s.x.clone(), s.y.clone())?;
        check_theta(&s.theta, s.dim)?;
        let pairs = PairDistances::new(&training);
        let f = factorize(&s.theta, &training, s.nugget, &pairs, Some((s.beta_hat, s.sigma2_hat)))?;
        Ok(Self::from_factor(
            training,
            s.theta.clone(),
            s.nugget,
            VarianceForm::default(),
            f,
        ))
    }
}

/// JSON form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub dim: usize,
    pub n: usize,
    pub theta: Vec<f64>,
    pub beta_hat: f64,
    pub sigma2_hat: f64,
    pub nugget: f64,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

/// Maximum-likelihood fit with multistart Nelder–Mead over `log10 θ`.
pub fn fit(training: TrainingSet, config: &FitConfig) -> Result<KrigingModel, KrigingError> {
    fit_from(training, config, None)
}

/// Like [`fit`], with `warm_start` (in `θ` units) used as the first start.
pub fn fit_from(
    training: TrainingSet,
    config: &FitConfig,
    warm_start: Option<&[f64]>,
) -> Result<KrigingModel, KrigingError> {
    let dim = training.dim();
    let (lo, hi) = config.log10_theta_bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(KrigingError::InvalidTheta(format!("bad log10 bounds ({lo}, {hi})")));
    }
    if !(config.nugget.is_finite() && config.nugget >= 0.0) {
        return Err(KrigingError::InvalidTheta(format!(
            "nugget must be >= 0, got {}",
            config.nugget
        )));
    }
    let lo_v = vec![lo; dim];
    let hi_v = vec![hi; dim];

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = warm_start {
        check_theta(w, dim)?;
        starts.push(w.iter().map(|t| t.log10().clamp(lo, hi)).collect());
    }
    let n_random = config.n_starts.max(1) - starts.len();
    let mut rng = stream(config.seed, "fit", 0);
    for p in lhs_with(n_random, dim, &mut rng) {
        starts.push(p.iter().map(|u| lo + u * (hi - lo)).collect());
    }

    let pairs = PairDistances::new(&training);
    let objective = |z: &[f64]| -> f64 {
        let theta: Vec<f64> = z.iter().map(|v| 10f64.powf(*v)).collect();
        match factorize(&theta, &training, config.nugget, &pairs, None) {
            Ok(f) => likelihood_of(&f, training.len()),
            Err(_) => f64::INFINITY,
        }
    };
    let opts = SimplexOptions {
        max_evals: config.max_evals,
        ..SimplexOptions::default()
    };
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| simplex::minimize(objective, s, &lo_v, &hi_v, opts))
        .collect();
    let best = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .ok_or(KrigingError::FitFailed { starts: starts.len() })?;

    let theta: Vec<f64> = best.x.iter().map(|v| 10f64.powf(*v)).collect();
    let f = factorize(&theta, &training, config.nugget, &pairs, None)?;
    Ok(KrigingModel::from_factor(
        training,
        theta,
        config.nugget,
        config.variance_form,
        f,
    ))
}

#[cfg(test)]
mod tests;
