//! Independent reference implementations for the integration tests.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

/// Inverse by Gauss–Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|x, y| m[*x][col].abs().total_cmp(&m[*y][col].abs()))?;
        if m[pivot][col] == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = m[row][col];
                if factor != 0.0 {
                    for k in 0..2 * n {
                        m[row][k] -= factor * m[col][k];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// `ln |det A|` from Doolittle LU with partial pivoting.
pub fn lu_ln_abs_det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m = a.to_vec();
    let mut acc = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|x, y| m[*x][col].abs().total_cmp(&m[*y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        acc += p.abs().ln();
        for row in col + 1..n {
            let factor = m[row][col] / p;
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    acc
}

pub fn gaussian_correlation_matrix(theta: &[f64], x: &[Vec<f64>], nugget: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut r = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..theta.len()).map(|k| theta[k] * (x[i][k] - x[j][k]).powi(2)).sum();
            r[i][j] = (-s).exp() + if i == j { nugget } else { 0.0 };
        }
    }
    r
}

/// 1-norm condition number.
pub fn condition_number(a: &[Vec<f64>]) -> f64 {
    let norm1 = |m: &[Vec<f64>]| {
        (0..m.len())
            .map(|j| m.iter().map(|row| row[j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match gauss_jordan_inverse(a) {
        Some(inv) => norm1(a) * norm1(&inv),
        None => f64::INFINITY,
    }
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(p, q)| p * q).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Concentrated negative log-likelihood `(N ln σ̂² + ln|R|)/2` with explicit
/// inverse and determinant; returns `(value, β̂, σ̂²)`. Inside the logarithm
/// σ̂² is floored at 1e-300, so a perfectly fitted sample stays finite.
pub fn dense_neg_loglik(theta: &[f64], x: &[Vec<f64>], y: &[f64], nugget: f64) -> (f64, f64, f64) {
    let n = y.len();
    let r = gaussian_correlation_matrix(theta, x, nugget);
    let ri = gauss_jordan_inverse(&r).expect("non-singular");
    let ones = vec![1.0; n];
    let ri_ones = mat_vec(&ri, &ones);
    let beta = dot(&ri_ones, y) / dot(&ri_ones, &ones);
    let resid: Vec<f64> = y.iter().map(|v| v - beta).collect();
    let sigma2 = dot(&resid, &mat_vec(&ri, &resid)) / n as f64;
    let value = 0.5 * (n as f64 * sigma2.max(1e-300).ln() + lu_ln_abs_det(&r));
    (value, beta, sigma2)
}

/// Ordinary Kriging mean and variance at `x0` from the explicit inverse.
pub fn dense_predict(theta: &[f64], x: &[Vec<f64>], y: &[f64], nugget: f64, x0: &[f64]) -> (f64, f64) {
    let n = y.len();
    let (_, beta, sigma2) = dense_neg_loglik(theta, x, y, nugget);
    let ri = gauss_jordan_inverse(&gaussian_correlation_matrix(theta, x, nugget)).unwrap();
    let r: Vec<f64> = x
        .iter()
        .map(|p| (-(0..theta.len()).map(|k| theta[k] * (p[k] - x0[k]).powi(2)).sum::<f64>()).exp())
        .collect();
    let resid: Vec<f64> = y.iter().map(|v| v - beta).collect();
    let ri_r = mat_vec(&ri, &r);
    let mean = beta + dot(&ri_r, &resid);
    let ones = vec![1.0; n];
    let ri_ones = mat_vec(&ri, &ones);
    let u = 1.0 - dot(&ones, &ri_r);
    let var = sigma2 * (1.0 - dot(&r, &ri_r) + u * u / dot(&ones, &ri_ones));
    (mean, var)
}

/// Trapezoid-rule cumulative integral of samples `f` on a uniform grid.
pub fn cumulative_trapezoid(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_self_checks() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
        let ai = gauss_jordan_inverse(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i][k] * ai[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let det = 4.0 * (3.0 * 2.0 - 0.04) - 1.0 * (2.0 - 0.1) + 0.5 * (0.2 - 1.5);
        assert!((lu_ln_abs_det(&a) - f64::ln(det)).abs() < 1e-14);
    }
}
