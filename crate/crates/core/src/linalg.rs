//! Small dense helpers for the m×m matrices that show up in flow Jacobians.
//! Matrices are row-major `Vec<f64>`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn identity(m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i * m + i] = 1.0;
    }
    out
}

/// `a · b` for square row-major matrices of size `m`.
pub fn matmul(m: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    out
}

pub fn matvec(m: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    (0..m).map(|i| dot(&a[i * m..(i + 1) * m], x)).collect()
}

/// Solve `a x = rhs` by Gaussian elimination with partial pivoting.
pub fn solve(m: usize, a: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    if m == 1 {
        if a[0] == 0.0 || !a[0].is_finite() {
            return Err(Error::Numerical("singular 1x1 system".into()));
        }
        return Ok(vec![rhs[0] / a[0]]);
    }
    let mut lu = a.to_vec();
    let mut x = rhs.to_vec();
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| lu[i * m + col].abs().total_cmp(&lu[j * m + col].abs()))
            .unwrap();
        let pv = lu[piv * m + col];
        if pv.abs() < 1e-300 || !pv.is_finite() {
            return Err(Error::Numerical("singular matrix in solve".into()));
        }
        if piv != col {
            for j in 0..m {
                lu.swap(col * m + j, piv * m + j);
            }
            x.swap(col, piv);
        }
        for i in col + 1..m {
            let f = lu[i * m + col] / pv;
            if f == 0.0 {
                continue;
            }
            for j in col..m {
                lu[i * m + j] -= f * lu[col * m + j];
            }
            x[i] -= f * x[col];
        }
    }
    for i in (0..m).rev() {
        let mut s = x[i];
        for j in i + 1..m {
            s -= lu[i * m + j] * x[j];
        }
        x[i] = s / lu[i * m + i];
    }
    Ok(x)
}

pub fn inverse(m: usize, a: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m * m];
    let mut e = vec![0.0; m];
    for j in 0..m {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = solve(m, a, &e)?;
        for i in 0..m {
            out[i * m + j] = col[i];
        }
    }
    Ok(out)
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: usize, a: &[f64]) -> f64 {
    if m == 1 {
        return a[0].abs();
    }
    let mat = DMatrix::from_row_slice(m, m, a);
    mat.singular_values().max()
}

/// Operator norm of `a - I`.
pub fn op_norm_minus_identity(m: usize, a: &[f64]) -> f64 {
    let mut d = a.to_vec();
    for i in 0..m {
        d[i * m + i] -= 1.0;
    }
    op_norm(m, &d)
}

/// Ordinary least squares fit `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_inverse() {
        let a = vec![4.0, 1.0, 0.5, 2.0, 3.0, 0.0, 1.0, -1.0, 5.0];
        let inv = inverse(3, &a).unwrap();
        let prod = matmul(3, &a, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_is_error() {
        assert!(solve(2, &[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn op_norm_of_diag() {
        assert!((op_norm(2, &[3.0, 0.0, 0.0, -4.0]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fit_line() {
        let (s, c) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14);
    }
}
