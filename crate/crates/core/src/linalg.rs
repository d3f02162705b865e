//! Small dense vector helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn unit_axis(n: usize, i: usize, sign: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = sign;
    e
}

/// Gaussian direction normalized to unit Euclidean length.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = norm2(&v);
        if r > 1e-12 {
            return scale(&v, 1.0 / r);
        }
    }
}

/// Uniform point in the box `[lo, hi]` (all bounds finite).
pub fn random_in_box<R: Rng + ?Sized>(rng: &mut R, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| if h > l { l + (h - l) * rng.random::<f64>() } else { *l })
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).as_slice().to_vec()
}

pub fn mat_t_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m.transpose() * DVector::from_column_slice(v)).as_slice().to_vec()
}

/// Spectral norm via the largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0, |a: f64, &s| a.max(s))
}

/// Minimum-norm solution of `m z = r` with singular values below `rcond * s_max` dropped.
pub fn pinv_solve(m: &DMatrix<f64>, r: &[f64], rcond: f64) -> Vec<f64> {
    if m.nrows() == 1 {
        // Single row: J⁺ r = Jᵀ r / ‖J‖².
        let nn: f64 = m.iter().map(|v| v * v).sum();
        if nn == 0.0 {
            return vec![0.0; m.ncols()];
        }
        return m.iter().map(|v| v * r[0] / nn).collect();
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0, |a: f64, &s| a.max(s));
    if smax == 0.0 {
        return vec![0.0; m.ncols()];
    }
    let eps = (rcond * smax).max(f64::MIN_POSITIVE);
    match svd.solve(&DVector::from_column_slice(r), eps) {
        Ok(z) => z.as_slice().to_vec(),
        Err(_) => vec![0.0; m.ncols()],
    }
}

/// Numerical rank of a set of row vectors.
pub fn rank(rows: &[Vec<f64>], ncols: usize, tol: f64) -> usize {
    if rows.is_empty() || ncols == 0 {
        return 0;
    }
    let m = rows_to_matrix(rows, ncols);
    let sv = m.singular_values();
    let smax = sv.iter().fold(0.0, |a: f64, &s| a.max(s));
    sv.iter().filter(|&&s| s > tol * smax.max(1.0)).count()
}
