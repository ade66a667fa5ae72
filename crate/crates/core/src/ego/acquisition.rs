//! Expected-improvement infill criterion (minimization form).

use libm::erfc;

use crate::kriging::{KrigingError, KrigingModel};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `EI = (f_min - μ) Φ(z) + s φ(z)` with `z = (f_min - μ) / s`; exactly zero
/// when `s = 0`.
pub fn ei_from_moments(mean: f64, sd: f64, f_min: f64) -> f64 {
    if !(sd > 0.0) {
        return 0.0;
    }
    let improvement = f_min - mean;
    let z = improvement / sd;
    (improvement * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

/// Expected improvement of the model at `x` over the incumbent `f_min`.
pub fn expected_improvement(model: &KrigingModel, x: &[f64], f_min: f64) -> Result<f64, KrigingError> {
    let p = model.predict(x)?;
    Ok(ei_from_moments(p.mean, p.sd, f_min))
}
