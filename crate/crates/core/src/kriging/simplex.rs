//! Box-constrained Nelder–Mead used for the likelihood search.

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Initial edge length, as a fraction of each box side.
    pub initial_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 400,
            initial_step: 0.15,
            f_tol: 1e-9,
            x_tol: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Minimizes `f` over the box `[lo, hi]` starting from `start`.
///
/// Non-finite values are treated as `+inf`. Trial points are projected onto
/// the box.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: SimplexOptions,
) -> SimplexResult {
    let n = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut p0 = start.to_vec();
    clamp_into(&mut p0, lo, hi);
    pts.push(p0.clone());
    for k in 0..n {
        let mut p = p0.clone();
        let step = opts.initial_step * (hi[k] - lo[k]);
        p[k] = if p[k] + step <= hi[k] { p[k] + step } else { p[k] - step };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]).then(a.cmp(b)));
        pts = order.iter().map(|i| pts[*i].clone()).collect();
        vals = order.iter().map(|i| vals[*i]).collect();

        let (best, worst) = (vals[0], vals[n]);
        let spread = (worst - best).abs();
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if best.is_finite() && spread <= opts.f_tol * (1.0 + best.abs()) && size <= opts.x_tol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect();
            clamp_into(&mut x, lo, hi);
            x
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        for i in 1..=n {
            let p: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(x, b)| b + 0.5 * (x - b)).collect();
            vals[i] = eval(&p, &mut evals);
            pts[i] = p;
        }
    }

    let best = (0..=n)
        .min_by(|a, b| vals[*a].total_cmp(&vals[*b]).then(a.cmp(b)))
        .unwrap_or(0);
    SimplexResult {
        x: pts[best].clone(),
        value: vals[best],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.5).powi(2);
        let r = minimize(f, &[1.0, 1.0], &[-2.0, -2.0], &[2.0, 2.0], SimplexOptions::default());
        assert!((r.x[0] - 0.3).abs() < 1e-3 && (r.x[1] + 0.5).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn respects_box_and_skips_infinite_regions() {
        let f = |x: &[f64]| if x[0] < -1.0 { f64::NAN } else { x[0] };
        let r = minimize(f, &[1.5], &[-3.0], &[2.0], SimplexOptions::default());
        assert!(r.value.is_finite());
        assert!(r.x[0] >= -1.0 - 1e-12 && r.x[0] < -0.9, "{:?}", r.x);
    }
}
