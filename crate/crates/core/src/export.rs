//! Plot-ready CSV output.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::kriging::{KrigingError, KrigingModel};

/// Formats `x` with 9 significant digits, `%g` style.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("surface resolution must be >= 2, got {0}")]
    Resolution(usize),
    #[error("surface dimensions ({0}, {1}) need 0 <= i < j < {2}")]
    Dims(usize, usize, usize),
    #[error("slice has {actual} coordinates, model has {expected}")]
    Slice { expected: usize, actual: usize },
    #[error(transparent)]
    Kriging(#[from] KrigingError),
}

/// Model predictions over a square grid in two normalized coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceGrid {
    pub dims: (usize, usize),
    pub resolution: usize,
    /// `(x_i, x_j, mean, sd)`, `x_i` varying slowest.
    pub rows: Vec<[f64; 4]>,
    /// Best training point projected onto the grid plane, and its value.
    pub incumbent: (f64, f64, f64),
}

impl SurfaceGrid {
    /// CSV `x_i,x_j,mean,sd` with 1-based coordinate names.
    pub fn to_csv(&self) -> String {
        let (i, j) = (self.dims.0 + 1, self.dims.1 + 1);
        let mut out = format!("x_{i},x_{j},mean,sd\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", sig9(r[0]), sig9(r[1]), sig9(r[2]), sig9(r[3]));
        }
        out
    }

    /// Sidecar CSV `x_i,x_j,y` holding the incumbent optimum.
    pub fn incumbent_csv(&self) -> String {
        let (i, j) = (self.dims.0 + 1, self.dims.1 + 1);
        let (a, b, y) = self.incumbent;
        format!("x_{i},x_{j},y\n{},{},{}\n", sig9(a), sig9(b), sig9(y))
    }

    /// True if the mean takes both signs on the grid.
    pub fn mean_changes_sign(&self) -> bool {
        self.rows.iter().any(|r| r[2] > 0.0) && self.rows.iter().any(|r| r[2] < 0.0)
    }
}

/// Evaluates `model` on a `resolution × resolution` grid over normalized
/// coordinates `dims`, holding the others at `slice`.
///
/// Means are multiplied by `sign`, so a model fitted to negated values can be
/// reported in the original orientation; the incumbent is the training point
/// with the lowest fitted value.
pub fn export_surface_grid(
    model: &KrigingModel,
    dims: (usize, usize),
    resolution: usize,
    slice: &[f64],
    sign: f64,
) -> Result<SurfaceGrid, ExportError> {
    let dim = model.dim();
    if resolution < 2 {
        return Err(ExportError::Resolution(resolution));
    }
    if !(dims.0 < dims.1 && dims.1 < dim) {
        return Err(ExportError::Dims(dims.0, dims.1, dim));
    }
    if slice.len() != dim {
        return Err(ExportError::Slice {
            expected: dim,
            actual: slice.len(),
        });
    }
    let step = 1.0 / (resolution - 1) as f64;
    let rows = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            let mut x = slice.to_vec();
            x[dims.0] = (k / resolution) as f64 * step;
            x[dims.1] = (k % resolution) as f64 * step;
            let p = model.predict(&x)?;
            Ok([x[dims.0], x[dims.1], sign * p.mean, p.sd])
        })
        .collect::<Result<Vec<_>, KrigingError>>()?;
    let training = model.training();
    let best = (0..training.len())
        .min_by(|a, b| training.y()[*a].total_cmp(&training.y()[*b]))
        .expect("training sets are non-empty");
    let p = training.point(best);
    Ok(SurfaceGrid {
        dims,
        resolution,
        rows,
        incumbent: (p[dims.0], p[dims.1], sign * training.y()[best]),
    })
}
