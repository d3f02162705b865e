//! Euclidean projection onto `{z : A z ≤ b}` by a primal active-set method.

use super::lp::{solve_lp, LinearProgram, LpStatus};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm2, norm_inf, sub};
use nalgebra::{DMatrix, DVector};

const MAX_ITER: usize = 2_000;

/// Row tolerance used when deciding which constraints are active at a point.
pub fn active_tol(b: f64) -> f64 {
    1e-8 * (1.0 + b.abs())
}

/// Feasible point of `{Az ≤ b}` closest to `p` in the ℓ¹ norm, or `None` if empty.
pub fn l1_nearest_feasible(p: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<Option<Vec<f64>>> {
    let n = p.len();
    // Variables (z, t): minimize Σt with −t ≤ z − p ≤ t.
    let mut c = vec![0.0; n];
    c.extend(std::iter::repeat_n(1.0, n));
    let mut lower = vec![f64::NEG_INFINITY; n];
    lower.extend(std::iter::repeat_n(0.0, n));
    let mut lp = LinearProgram::new(c).bounds(lower, vec![f64::INFINITY; 2 * n]);
    for (row, &bi) in a.iter().zip(b) {
        let mut r = row.clone();
        r.extend(std::iter::repeat_n(0.0, n));
        lp = lp.leq(r, bi);
    }
    for i in 0..n {
        let mut r = vec![0.0; 2 * n];
        r[i] = 1.0;
        r[n + i] = -1.0;
        lp = lp.leq(r, p[i]);
        let mut r = vec![0.0; 2 * n];
        r[i] = -1.0;
        r[n + i] = -1.0;
        lp = lp.leq(r, -p[i]);
    }
    let s = solve_lp(&lp)?;
    match s.status {
        LpStatus::Optimal => Ok(Some(s.x[..n].to_vec())),
        LpStatus::Infeasible => Ok(None),
        _ => Err(Error::NumericalFailure("feasibility LP failed".into())),
    }
}

fn max_violation(z: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(r, &bi)| dot(r, z) - bi).fold(0.0, f64::max)
}

/// Solves `(A_W A_Wᵀ) λ = A_W v`; returns `(λ, v − A_Wᵀλ)`.
fn null_projection(a: &[Vec<f64>], w: &[usize], v: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = v.len();
    if w.is_empty() {
        return Some((Vec::new(), v.to_vec()));
    }
    let aw = DMatrix::from_fn(w.len(), n, |i, j| a[w[i]][j]);
    let gram = &aw * aw.transpose();
    let rhs = &aw * DVector::from_column_slice(v);
    let lam = gram.cholesky()?.solve(&rhs);
    let s = DVector::from_column_slice(v) - aw.transpose() * &lam;
    Some((lam.as_slice().to_vec(), s.as_slice().to_vec()))
}

fn independent_of(a: &[Vec<f64>], w: &[usize], i: usize) -> bool {
    let n = a[i].len();
    match null_projection(a, w, &a[i]) {
        Some((_, resid)) => norm2(&resid) > 1e-9 * (1.0 + norm2(&a[i])),
        None => n > 0 && w.is_empty(),
    }
}

/// Projects `p` onto the nonempty polyhedron `{z : A z ≤ b}`.
///
/// Returns [`Error::Infeasible`] when the polyhedron is empty and
/// [`Error::NumericalFailure`] if the final KKT residual exceeds `1e−8`.
pub fn project_polyhedron(p: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = p.len();
    check_dim(a.len(), b.len())?;
    for row in a {
        check_dim(n, row.len())?;
    }
    let scale = 1.0 + norm_inf(p) + norm_inf(b);
    if max_violation(p, a, b) <= 1e-12 * scale {
        return Ok(p.to_vec());
    }
    let mut z = l1_nearest_feasible(p, a, b)?.ok_or(Error::Infeasible)?;

    let mut w: Vec<usize> = Vec::new();
    for i in 0..a.len() {
        if (dot(&a[i], &z) - b[i]).abs() <= active_tol(b[i]) && independent_of(a, &w, i) {
            w.push(i);
        }
    }

    let step_tol = 1e-13 * scale;
    for _ in 0..MAX_ITER {
        let target = sub(p, &z);
        let (lam, s) =
            null_projection(a, &w, &target).ok_or_else(|| Error::NumericalFailure("singular working set".into()))?;
        if norm2(&s) <= step_tol {
            // Stationary on the working set: check multiplier signs.
            let worst = lam.iter().enumerate().filter(|(_, &l)| l < -1e-12 * scale).fold(
                None::<(usize, f64)>,
                |acc, (k, &l)| match acc {
                    Some((_, best)) if l >= best => acc,
                    _ => Some((k, l)),
                },
            );
            match worst {
                None => {
                    verify_kkt(p, &z, a, b, &w, &lam)?;
                    return Ok(z);
                }
                Some((k, _)) => {
                    w.remove(k);
                    continue;
                }
            }
        }
        let mut alpha = 1.0;
        let mut block = None;
        for i in 0..a.len() {
            if w.contains(&i) {
                continue;
            }
            let as_ = dot(&a[i], &s);
            if as_ > 1e-14 * norm2(&a[i]) * norm2(&s) {
                let room = (b[i] - dot(&a[i], &z)).max(0.0);
                let t = room / as_;
                if t < alpha {
                    alpha = t;
                    block = Some(i);
                }
            }
        }
        for (zj, sj) in z.iter_mut().zip(&s) {
            *zj += alpha * sj;
        }
        if let Some(i) = block {
            w.push(i);
        }
    }
    Err(Error::NumericalFailure("active-set iteration limit".into()))
}

fn verify_kkt(p: &[f64], z: &[f64], a: &[Vec<f64>], b: &[f64], w: &[usize], lam: &[f64]) -> Result<()> {
    let mut grad = sub(z, p);
    for (k, &i) in w.iter().enumerate() {
        for j in 0..grad.len() {
            grad[j] += lam[k] * a[i][j];
        }
    }
    let scale = 1.0 + norm2(p);
    let stationarity = norm2(&grad);
    let feas = max_violation(z, a, b);
    let comp = w
        .iter()
        .enumerate()
        .map(|(k, &i)| (lam[k] * (dot(&a[i], z) - b[i])).abs())
        .fold(0.0, f64::max);
    if stationarity <= 1e-8 * scale && feas <= 1e-8 * scale && comp <= 1e-8 * scale {
        Ok(())
    } else {
        Err(Error::NumericalFailure(format!(
            "projection KKT residual too large (stat {stationarity:e}, feas {feas:e}, comp {comp:e})"
        )))
    }
}
