//! Real-coded genetic algorithm on the unit cube.
//!
//! Binary tournament selection, blend (BLX-α) crossover, per-gene Gaussian
//! mutation and single-individual elitism. Offspring are clamped to `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; `None` means `1 / dim`.
    pub mutation_prob: Option<f64>,
    pub blend_alpha: f64,
    /// Initial mutation standard deviation. It shrinks linearly to a tenth of
    /// this value by the last generation.
    pub mutation_sigma: f64,
    pub tournament_size: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            crossover_prob: 0.9,
            mutation_prob: None,
            blend_alpha: 0.5,
            mutation_sigma: 0.1,
            tournament_size: 2,
        }
    }
}

impl GaConfig {
    /// Returns the offending field name and reason on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(("population", format!("must be even and >= 4, got {}", self.population)));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(("crossover_prob", "must lie in [0, 1]".into()));
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(("mutation_prob", "must lie in [0, 1]".into()));
            }
        }
        if !(self.blend_alpha >= 0.0 && self.blend_alpha.is_finite()) {
            return Err(("blend_alpha", "must be finite and >= 0".into()));
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(("mutation_sigma", "must be finite and >= 0".into()));
        }
        if self.tournament_size == 0 {
            return Err(("tournament_size", "must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct GaOutcome {
    pub best: Candidate,
    /// Best-ever individual followed by the distinct final-population members,
    /// in decreasing fitness.
    pub ranked: Vec<Candidate>,
    pub evaluations: usize,
}

fn fitness(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn evaluate<F: Fn(&[f64]) -> f64 + Sync>(f: &F, pop: &[Vec<f64>]) -> Vec<f64> {
    pop.par_iter().map(|x| fitness(f(x))).collect()
}

fn tournament<'a>(pop: &'a [Vec<f64>], fit: &[f64], size: usize, rng: &mut StreamRng) -> &'a [f64] {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..size {
        let c = rng.random_range(0..pop.len());
        if fit[c] > fit[best] {
            best = c;
        }
    }
    &pop[best]
}

fn argmax(fit: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in fit.iter().enumerate() {
        if *v > fit[best] {
            best = i;
        }
    }
    best
}

/// Maximizes `objective` over `[0, 1]^dim`.
///
/// # Panics
/// If `config` fails [`GaConfig::validate`].
pub fn ga_maximize<F: Fn(&[f64]) -> f64 + Sync>(objective: F, dim: usize, config: &GaConfig, seed: u64) -> GaOutcome {
    ga_maximize_seeded(objective, dim, config, seed, &[])
}

/// Like [`ga_maximize`], with `initial` individuals injected into the first
/// population.
pub fn ga_maximize_seeded<F: Fn(&[f64]) -> f64 + Sync>(
    objective: F,
    dim: usize,
    config: &GaConfig,
    seed: u64,
    initial: &[Vec<f64>],
) -> GaOutcome {
    if let Err((field, reason)) = config.validate() {
        panic!("invalid GA configuration `{field}`: {reason}");
    }
    let mut rng = stream(seed, "ga", 0);
    let p_m = config.mutation_prob.unwrap_or(1.0 / dim.max(1) as f64);
    let size = config.population;

    let mut pop: Vec<Vec<f64>> = initial
        .iter()
        .take(size)
        .map(|x| x.iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .collect();
    while pop.len() < size {
        pop.push((0..dim).map(|_| rng.random::<f64>()).collect());
    }
    let mut fit = evaluate(&objective, &pop);
    let mut evaluations = pop.len();
    let b = argmax(&fit);
    let mut best = Candidate {
        x: pop[b].clone(),
        value: fit[b],
    };

    for gen in 0..config.generations {
        let progress = gen as f64 / config.generations.max(1) as f64;
        let sigma = config.mutation_sigma * (1.0 - 0.9 * progress);
        let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");

        let elite = argmax(&fit);
        let mut next = Vec::with_capacity(size);
        next.push(pop[elite].clone());
        while next.len() < size {
            let p1 = tournament(&pop, &fit, config.tournament_size, &mut rng);
            let p2 = tournament(&pop, &fit, config.tournament_size, &mut rng);
            let (mut c1, mut c2) = (p1.to_vec(), p2.to_vec());
            if rng.random::<f64>() < config.crossover_prob {
                for k in 0..dim {
                    let (lo, hi) = (p1[k].min(p2[k]), p1[k].max(p2[k]));
                    let ext = config.blend_alpha * (hi - lo);
                    c1[k] = lo - ext + rng.random::<f64>() * (hi - lo + 2.0 * ext);
                    c2[k] = lo - ext + rng.random::<f64>() * (hi - lo + 2.0 * ext);
                }
            }
            for child in [&mut c1, &mut c2] {
                for g in child.iter_mut() {
                    if rng.random::<f64>() < p_m {
                        *g += normal.sample(&mut rng);
                    }
                    *g = g.clamp(0.0, 1.0);
                }
            }
            next.push(c1);
            if next.len() < size {
                next.push(c2);
            }
        }
        pop = next;
        fit = evaluate(&objective, &pop);
        evaluations += pop.len();
        let b = argmax(&fit);
        if fit[b] > best.value {
            best = Candidate {
                x: pop[b].clone(),
                value: fit[b],
            };
        }
    }

    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|a, b| fit[*b].total_cmp(&fit[*a]).then(a.cmp(b)));
    let mut ranked = vec![best.clone()];
    for i in order {
        if ranked.iter().all(|c| c.x != pop[i]) {
            ranked.push(Candidate {
                x: pop[i].clone(),
                value: fit[i],
            });
        }
    }
    GaOutcome {
        best,
        ranked,
        evaluations,
    }
}
