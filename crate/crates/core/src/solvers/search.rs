//! Grid evaluation plus pattern-search refinement for black-box functions.

use crate::error::{check_dim, Error, Result};
use crate::serde_ext::reals;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn default_starts() -> usize {
    4
}
fn default_step() -> f64 {
    0.125
}
fn default_shrink() -> f64 {
    0.5
}
fn default_max_iter() -> usize {
    60
}

/// Search box, grid resolution and local-descent parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    #[serde(with = "reals")]
    pub lo: Vec<f64>,
    #[serde(with = "reals")]
    pub hi: Vec<f64>,
    /// Grid intervals per axis; nodes are `lo + (hi − lo)·i/resolution`, `i = 0..=resolution`.
    pub resolution: usize,
    /// Best grid nodes refined per coarsening level.
    #[serde(default = "default_starts")]
    pub starts: usize,
    /// Initial pattern step as a fraction of each box side.
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SearchSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Self {
        SearchSpec {
            lo,
            hi,
            resolution,
            starts: default_starts(),
            step: default_step(),
            shrink: default_shrink(),
            max_iter: default_max_iter(),
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.lo.len(), self.hi.len())?;
        if self.lo.is_empty() {
            return Err(Error::InvalidInput("search box has dimension 0".into()));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::InvalidInput("search box must be finite with lo ≤ hi".into()));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.step > 0.0) {
            return Err(Error::InvalidInput(
                "pattern step must be positive and shrink in (0,1)".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    pub fn clamp(&self, z: &mut [f64]) {
        for (v, (l, h)) in z.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn node_count(&self) -> usize {
        (self.resolution + 1).pow(self.dim() as u32)
    }

    /// Grid node with linear index `idx` (first axis varies fastest).
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let per = self.resolution + 1;
        let mut rest = idx;
        (0..self.dim())
            .map(|k| {
                let i = rest % per;
                rest /= per;
                node_coord(self.lo[k], self.hi[k], i, self.resolution)
            })
            .collect()
    }

    /// Per-axis integer indices of node `idx`.
    fn node_indices(&self, idx: usize) -> Vec<usize> {
        let per = self.resolution + 1;
        let mut rest = idx;
        (0..self.dim())
            .map(|_| {
                let i = rest % per;
                rest /= per;
                i
            })
            .collect()
    }
}

/// `lo + (hi − lo)·(i/res)`; the quotient is correctly rounded, so nested grids share nodes bitwise.
fn node_coord(lo: f64, hi: f64, i: usize, res: usize) -> f64 {
    lo + (hi - lo) * (i as f64 / res as f64)
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Evaluates `f` on every grid node, in node order.
pub fn evaluate_grid<F>(f: &F, spec: &SearchSpec) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    (0..spec.node_count())
        .into_par_iter()
        .map(|i| sanitize(f(&spec.node(i))))
        .collect()
}

/// Indices of the `k` smallest values; ties go to the lowest index.
pub fn k_best(values: &[f64], candidates: impl Iterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = candidates.collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Coordinate pattern search clamped to the box. Returns the best point and value.
pub fn pattern_search<F>(f: &F, start: &[f64], spec: &SearchSpec) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = start.len();
    let mut x = start.to_vec();
    spec.clamp(&mut x);
    let mut fx = sanitize(f(&x));
    let mut step: Vec<f64> = spec.lo.iter().zip(&spec.hi).map(|(l, h)| spec.step * (h - l)).collect();
    for _ in 0..spec.max_iter {
        let mut best: Option<(Vec<f64>, f64)> = None;
        for k in 0..n {
            if step[k] == 0.0 {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] = (y[k] + sign * step[k]).clamp(spec.lo[k], spec.hi[k]);
                if y[k] == x[k] {
                    continue;
                }
                let fy = sanitize(f(&y));
                let better = match &best {
                    None => fy < fx,
                    Some((_, fb)) => fy < *fb,
                };
                if better {
                    best = Some((y, fy));
                }
            }
        }
        match best {
            Some((y, fy)) => {
                x = y;
                fx = fy;
            }
            None => {
                for s in step.iter_mut() {
                    *s *= spec.shrink;
                }
                if step.iter().all(|&s| s < 1e-15) {
                    break;
                }
            }
        }
    }
    (x, fx)
}

/// Grid evaluation followed by pattern-search refinement from the best nodes.
///
/// Starts are the `spec.starts` best nodes at each nested coarsening of the grid
/// (`resolution`, `resolution/2`, … while even), so doubling the resolution can
/// only add starts. The returned value never exceeds the best grid value.
pub fn grid_multistart_min<F>(f: &F, spec: &SearchSpec) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    spec.validate()?;
    let values = evaluate_grid(f, spec);
    let starts = multistart_nodes(&values, spec);
    let refined: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|&i| pattern_search(f, &spec.node(i), spec))
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x, v) in refined {
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((x, v));
        }
    }
    Ok(best.expect("at least one start"))
}

/// Start nodes for [`grid_multistart_min`], sorted by node index.
pub fn multistart_nodes(values: &[f64], spec: &SearchSpec) -> Vec<usize> {
    let mut starts: Vec<usize> = Vec::new();
    let mut level = spec.resolution;
    loop {
        let stride = spec.resolution / level;
        let on_level = (0..values.len()).filter(|&i| spec.node_indices(i).iter().all(|&k| k % stride == 0));
        for i in k_best(values, on_level, spec.starts.max(1)) {
            if !starts.contains(&i) {
                starts.push(i);
            }
        }
        if !level.is_multiple_of(2) || level / 2 < 1 {
            break;
        }
        level /= 2;
    }
    starts.sort_unstable();
    starts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quadratic_bowl() {
        let x0 = [0.3, -0.7];
        let spec = SearchSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 8);
        let f = |x: &[f64]| (x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2);
        let (x, v) = grid_multistart_min(&f, &spec).unwrap();
        let cell = 2.0 * 2f64.sqrt() / 8.0;
        assert!(((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2)).sqrt() <= cell);
        assert!(v <= 1e-12);
    }

    #[test]
    fn constant_function() {
        let spec = SearchSpec::new(vec![0.0], vec![1.0], 4);
        let (_, v) = grid_multistart_min(&|_: &[f64]| 3.5, &spec).unwrap();
        assert_eq!(v, 3.5);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let spec = SearchSpec::new(vec![-2.0, -2.0], vec![2.0, 2.0], 64);
        let (x, v) = grid_multistart_min(&f, &spec).unwrap();
        assert!(v <= 1e-4, "value {v}");
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-2);
    }

    #[test]
    fn nested_nodes_are_bitwise_equal() {
        for i in 0..=16 {
            assert_eq!(node_coord(-1.3, 2.9, 2 * i, 32), node_coord(-1.3, 2.9, i, 16));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(SearchSpec::new(vec![0.0], vec![1.0], 1).validate().is_err());
        assert!(SearchSpec::new(vec![0.0], vec![f64::INFINITY], 4).validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn monotone_in_resolution(a in -2.0f64..2.0, b in -2.0f64..2.0, w in 0.5f64..6.0, res in 2usize..12) {
            let f = move |x: &[f64]| (w * x[0]).sin() * (x[1] - b).cos() + 0.1 * (x[0] - a).powi(2);
            let coarse = SearchSpec::new(vec![-2.0, -2.0], vec![2.0, 2.0], res);
            let fine = SearchSpec { resolution: 2 * res, ..coarse.clone() };
            let (_, vc) = grid_multistart_min(&f, &coarse).unwrap();
            let (_, vf) = grid_multistart_min(&f, &fine).unwrap();
            prop_assert!(vf <= vc + 1e-12, "coarse {vc} fine {vf}");
        }
    }
}
