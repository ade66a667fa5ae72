//! Latin-hypercube designs on the unit cube.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::{stream, StreamRng};

/// `n × dim` Latin-hypercube sample in `[0, 1)^dim`, deterministic per `seed`.
///
/// Every marginal has exactly one point in each of the `n` equal-width bins.
pub fn lhs_sample(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "lhs", 0);
    lhs_with(n, dim, &mut rng)
}

/// Latin-hypercube sample drawn from an existing generator.
pub fn lhs_with(n: usize, dim: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]; n];
    let mut bins: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        bins.shuffle(rng);
        for (row, bin) in out.iter_mut().zip(&bins) {
            let jitter: f64 = rng.random();
            // Keep the point strictly inside its bin even after rounding.
            row[d] = ((*bin as f64 + jitter) / n as f64).min((*bin as f64 + 1.0) / n as f64 - 1e-15);
        }
    }
    out
}
