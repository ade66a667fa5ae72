//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use spinewave_core::kriging::TrainingSet;
use spinewave_core::lhs_sample;

/// Branin function on the unit square.
pub fn branin(u: &[f64]) -> f64 {
    let x = -5.0 + 15.0 * u[0];
    let y = 15.0 * u[1];
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    (y - b * x * x + c * x - 6.0).powi(2) + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x.cos() + 10.0
}

/// `n` Latin-hypercube points in `dim` dimensions, scored by Branin on the
/// first two coordinates plus a quadratic in the rest.
pub fn training_set(n: usize, dim: usize) -> TrainingSet {
    let xs = lhs_sample(n, dim, 1);
    let ys = xs
        .iter()
        .map(|x| branin(x) + x[2..].iter().map(|v| (v - 0.5).powi(2)).sum::<f64>())
        .collect();
    TrainingSet::new(xs, ys).expect("valid fixture")
}
