//! Parametric programs `min f(x, y)  s.t.  g(x) − y ∈ K`, their value function
//! and first-order sensitivity.

mod linearized;
mod sandwich;

pub use linearized::{
    feasible_direction_check, linearized_dual, linearized_primal, multiplier_set, robinson_check, DualReport,
    FeasibleDirectionReport, MultiplierSet, RobinsonReport,
};
pub use sandwich::{
    sandwich_check, value_directional_derivative, DerivativeLevel, DerivativeSchedule, SandwichReport, SandwichStatus,
    SolutionBounds, ValueDerivative,
};

use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexSet;
use crate::linalg::{axpy, dist2, dot, norm2, random_in_box, sub};
use crate::maps::{membership_tol, SetValuedMap, SmoothFn};
use crate::serde_ext::{real, reals};
use crate::solvers::search::{evaluate_grid, multistart_nodes, pattern_search, SearchSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Weight of the feasibility penalty in the global phase.
const PENALTY: f64 = 1e3;
/// Multistart minimizers within this much of the best value are kept as solutions.
const CLUSTER_VALUE_TOL: f64 = 1e-4;
/// Solutions closer than this are merged.
const CLUSTER_DIST_TOL: f64 = 1e-3;
const REFINE_ITERS: usize = 200;

fn is_empty(v: &[Vec<f64>]) -> bool {
    v.is_empty()
}

/// Objective `f(x, y)`; every variant has a constant `∇ᵧf` except through the bilinear term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Objective {
    /// `c·x + Σ qᵢxᵢ² + b·y + xᵀCy`.
    Quadratic {
        #[serde(with = "reals")]
        lin_x: Vec<f64>,
        #[serde(with = "reals", default)]
        quad_x: Vec<f64>,
        #[serde(with = "reals")]
        lin_y: Vec<f64>,
        /// `C`, one row per `x` coordinate; empty means zero.
        #[serde(default, skip_serializing_if = "is_empty")]
        bilinear: Vec<Vec<f64>>,
    },
    /// `f(x) + b·y` with a scalar smooth `f`.
    Smooth {
        f: SmoothFn,
        #[serde(with = "reals")]
        lin_y: Vec<f64>,
    },
}

impl Objective {
    pub fn quadratic(lin_x: Vec<f64>, quad_x: Vec<f64>, lin_y: Vec<f64>) -> Self {
        Objective::Quadratic {
            lin_x,
            quad_x,
            lin_y,
            bilinear: Vec::new(),
        }
    }

    pub fn x_dim(&self) -> usize {
        match self {
            Objective::Quadratic { lin_x, .. } => lin_x.len(),
            Objective::Smooth { f, .. } => f.in_dim(),
        }
    }

    pub fn y_dim(&self) -> usize {
        match self {
            Objective::Quadratic { lin_y, .. } | Objective::Smooth { lin_y, .. } => lin_y.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = (self.x_dim(), self.y_dim());
        match self {
            Objective::Quadratic { quad_x, bilinear, .. } => {
                if !quad_x.is_empty() {
                    check_dim(n, quad_x.len())?;
                }
                if !bilinear.is_empty() {
                    check_dim(n, bilinear.len())?;
                    for row in bilinear {
                        check_dim(m, row.len())?;
                    }
                }
            }
            Objective::Smooth { f, .. } => {
                f.validate()?;
                check_dim(1, f.out_dim())?;
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Objective::Quadratic {
                lin_x,
                quad_x,
                lin_y,
                bilinear,
            } => {
                let quad: f64 = quad_x.iter().zip(x).map(|(q, v)| q * v * v).sum();
                let cross: f64 = bilinear.iter().zip(x).map(|(row, xi)| xi * dot(row, y)).sum();
                dot(lin_x, x) + quad + dot(lin_y, y) + cross
            }
            Objective::Smooth { f, lin_y } => f.eval(x)[0] + dot(lin_y, y),
        }
    }

    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self {
            Objective::Quadratic {
                lin_x,
                quad_x,
                bilinear,
                ..
            } => (0..x.len())
                .map(|i| {
                    let q = quad_x.get(i).copied().unwrap_or(0.0);
                    let c = bilinear.get(i).map_or(0.0, |row| dot(row, y));
                    lin_x[i] + 2.0 * q * x[i] + c
                })
                .collect(),
            Objective::Smooth { f, .. } => f.jacobian(x).row(0).iter().copied().collect(),
        }
    }

    pub fn grad_y(&self, x: &[f64], _y: &[f64]) -> Vec<f64> {
        match self {
            Objective::Quadratic { lin_y, bilinear, .. } => {
                let mut g = lin_y.clone();
                for (row, xi) in bilinear.iter().zip(x) {
                    for (gj, cj) in g.iter_mut().zip(row) {
                        *gj += xi * cj;
                    }
                }
                g
            }
            Objective::Smooth { lin_y, .. } => lin_y.clone(),
        }
    }

    /// Central-difference check of both gradients at random points of the box.
    pub fn check_gradients(&self, lo: &[f64], hi: &[f64], seed: u64) -> Result<()> {
        let (n, m) = (self.x_dim(), self.y_dim());
        check_dim(n, lo.len())?;
        check_dim(n, hi.len())?;
        let lo_c: Vec<f64> = lo.iter().map(|v| v.max(-10.0)).collect();
        let hi_c: Vec<f64> = hi.iter().zip(&lo_c).map(|(v, l)| v.min(10.0).max(*l)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..8 {
            let x = random_in_box(&mut rng, &lo_c, &hi_c);
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fd = |z: &[f64], i: usize, wrt_x: bool| {
                let h = 1e-6 * (1.0 + z[i].abs());
                let (mut a, mut b) = (z.to_vec(), z.to_vec());
                a[i] += h;
                b[i] -= h;
                let (fa, fb) = if wrt_x {
                    (self.eval(&a, &y), self.eval(&b, &y))
                } else {
                    (self.eval(&x, &a), self.eval(&x, &b))
                };
                (fa - fb) / (2.0 * h)
            };
            let gx = self.grad_x(&x, &y);
            let gy = self.grad_y(&x, &y);
            let errs = (0..n)
                .map(|i| (gx[i] - fd(&x, i, true)).abs() / (1.0 + gx[i].abs()))
                .chain((0..m).map(|j| (gy[j] - fd(&y, j, false)).abs() / (1.0 + gy[j].abs())));
            let worst = errs.fold(0.0, f64::max);
            if worst > 1e-5 {
                return Err(Error::InvalidInput(format!(
                    "objective gradient disagrees with finite differences by {worst:e}"
                )));
            }
        }
        Ok(())
    }
}

/// `min f(x, y)  s.t.  g(x) − y ∈ K` over the search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricProgram {
    pub objective: Objective,
    pub g: SmoothFn,
    pub set: ConvexSet,
    pub search: SearchSpec,
}

/// Names accepted by [`ParametricProgram::builtin`].
pub const BUILTIN_PROGRAMS: [(&str, &str); 3] = [
    ("lp-toy-leq", "min −x  s.t.  x ≤ y;  v(y) = −y"),
    ("square-geq", "min x²  s.t.  x ≥ y;  v(y) = max(y, 0)²"),
    ("min-two-leq", "min −x  s.t.  x ≤ y₁, x ≤ y₂;  v(y) = −min(y₁, y₂)"),
];

impl ParametricProgram {
    pub fn new(objective: Objective, g: SmoothFn, set: ConvexSet, search: SearchSpec) -> Result<Self> {
        let p = ParametricProgram {
            objective,
            g,
            set,
            search,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let search1 = SearchSpec::new(vec![-2.0], vec![2.0], 64);
        match name {
            "lp-toy-leq" => Self::new(
                Objective::quadratic(vec![-1.0], vec![], vec![0.0]),
                SmoothFn::Identity { dim: 1 },
                ConvexSet::nonpositive_orthant(1),
                search1,
            ),
            "square-geq" => Self::new(
                Objective::quadratic(vec![0.0], vec![1.0], vec![0.0]),
                SmoothFn::Identity { dim: 1 },
                ConvexSet::nonnegative_orthant(1),
                search1,
            ),
            "min-two-leq" => Self::new(
                Objective::quadratic(vec![-1.0], vec![], vec![0.0, 0.0]),
                SmoothFn::Linear {
                    matrix: vec![vec![1.0], vec![1.0]],
                },
                ConvexSet::nonpositive_orthant(2),
                search1,
            ),
            other => Err(Error::InvalidInput(format!("unknown builtin program `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.g.validate()?;
        self.set.validate()?;
        self.search.validate()?;
        let (n, m) = (self.x_dim(), self.y_dim());
        check_dim(n, self.g.in_dim())?;
        check_dim(m, self.g.out_dim())?;
        check_dim(m, self.set.dim())?;
        check_dim(n, self.search.dim())?;
        self.g
            .check_jacobian(&self.search.lo, &self.search.hi, self.search.seed)?;
        self.objective
            .check_gradients(&self.search.lo, &self.search.hi, self.search.seed)
    }

    pub fn x_dim(&self) -> usize {
        self.objective.x_dim()
    }

    pub fn y_dim(&self) -> usize {
        self.objective.y_dim()
    }

    /// `G = g − K`, so that `x ∈ Φ(y)` iff `y ∈ G(x)`.
    pub fn constraint_map(&self) -> SetValuedMap {
        SetValuedMap::SmoothMinusConvex {
            g: self.g.clone(),
            set: self.set.clone(),
            domain: None,
        }
    }

    /// `d(g(x) − y, K)`.
    pub fn infeasibility(&self, x: &[f64], y: &[f64]) -> f64 {
        self.set.distance(&sub(&self.g.eval(x), y)).unwrap_or(f64::INFINITY)
    }

    pub fn is_feasible(&self, x: &[f64], y: &[f64]) -> bool {
        self.infeasibility(x, y) <= membership_tol(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Feasible, but the local refinement hit its iteration limit or the
    /// penalty minimizer was far from the feasible set.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoint {
    #[serde(with = "reals")]
    pub x: Vec<f64>,
    #[serde(with = "real")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramSolution {
    #[serde(with = "reals")]
    pub x_star: Vec<f64>,
    #[serde(with = "real")]
    pub value: f64,
    pub status: SolveStatus,
    /// Distinct minimizers found, best first; approximates `S(y)`.
    pub clusters: Vec<ClusterPoint>,
}

struct Refined {
    x: Vec<f64>,
    value: f64,
    degraded: bool,
}

/// Projected-gradient descent on `Φ(y)` using restoration as the projection.
fn refine(p: &ParametricProgram, map: &SetValuedMap, start: &[f64], y: &[f64]) -> Option<Refined> {
    let mut x = map.restore(start, start, y)?;
    if !p.search.contains(&x, 1e-9) {
        return None;
    }
    let width = norm2(&sub(&p.search.hi, &p.search.lo));
    let mut degraded = dist2(&x, start) > 1e-3 * width;
    let mut fx = p.objective.eval(&x, y);
    let mut step = 0.1 * width;
    let mut converged = false;
    for _ in 0..REFINE_ITERS {
        let g = p.objective.grad_x(&x, y);
        let gn = norm2(&g);
        if gn == 0.0 {
            converged = true;
            break;
        }
        let mut s = step / gn;
        let mut accepted = None;
        while s * gn > 1e-14 * (1.0 + norm2(&x)) {
            let anchor = axpy(&x, -s, &g);
            if let Some(z) = map.restore(&anchor, &x, y) {
                let fz = p.objective.eval(&z, y);
                if fz < fx && p.search.contains(&z, 1e-9) {
                    accepted = Some((z, fz));
                    break;
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((z, fz)) => {
                let moved = dist2(&z, &x);
                let gain = fx - fz;
                x = z;
                fx = fz;
                step = (2.0 * s * gn).min(0.1 * width);
                if moved <= 1e-13 * (1.0 + norm2(&x)) || gain <= 1e-15 * (1.0 + fx.abs()) {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    degraded |= !converged;
    Some(Refined { x, value: fx, degraded })
}

/// Global phase on `f + M·d(g(x) − y, K)`, restoration, projected refinement
/// and clustering of the minimizers within `10⁻⁴` of the best value.
pub fn solve_program(p: &ParametricProgram, y: &[f64]) -> Result<ProgramSolution> {
    check_dim(p.y_dim(), y.len())?;
    p.search.validate()?;
    let map = p.constraint_map();
    let penalized = |x: &[f64]| p.objective.eval(x, y) + PENALTY * p.infeasibility(x, y);
    let values = evaluate_grid(&penalized, &p.search);
    let starts = multistart_nodes(&values, &p.search);
    let mut found: Vec<Refined> = starts
        .par_iter()
        .filter_map(|&i| {
            let (x, _) = pattern_search(&penalized, &p.search.node(i), &p.search);
            refine(p, &map, &x, y)
        })
        .collect();
    if found.is_empty() {
        return Err(Error::Infeasible);
    }
    found.sort_by(|a, b| a.value.total_cmp(&b.value));
    let best = found[0].value;
    let degraded = found[0].degraded;
    let mut clusters: Vec<ClusterPoint> = Vec::new();
    for r in found {
        if r.value > best + CLUSTER_VALUE_TOL * (1.0 + best.abs()) {
            break;
        }
        if clusters.iter().all(|c| dist2(&c.x, &r.x) > CLUSTER_DIST_TOL) {
            clusters.push(ClusterPoint { x: r.x, value: r.value });
        }
    }
    Ok(ProgramSolution {
        x_star: clusters[0].x.clone(),
        value: best,
        status: if degraded {
            SolveStatus::Degraded
        } else {
            SolveStatus::Optimal
        },
        clusters,
    })
}

/// `v(y)`.
pub fn value_function(p: &ParametricProgram, y: &[f64]) -> Result<f64> {
    Ok(solve_program(p, y)?.value)
}

/// A feasible point with `f(x, y) ≤ v(y) + eps`.
///
/// Walks from the solver's minimizer toward the farthest feasible grid node,
/// restoring feasibility along the way, and stops at the last point whose
/// value stays within `eps/2` of the optimum.
pub fn epsilon_optimal(p: &ParametricProgram, y: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidInput("eps must be nonnegative".into()));
    }
    let sol = solve_program(p, y)?;
    if eps == 0.0 {
        return Ok(sol.x_star);
    }
    let map = p.constraint_map();
    let x0 = sol.x_star.clone();
    let far = (0..p.search.node_count())
        .map(|i| p.search.node(i))
        .filter(|z| p.is_feasible(z, y))
        .max_by(|a, b| dist2(a, &x0).total_cmp(&dist2(b, &x0)));
    let Some(far) = far else {
        return Ok(x0);
    };
    let budget = sol.value + 0.5 * eps;
    let at = |s: f64| -> Option<(Vec<f64>, f64)> {
        let z = axpy(&x0, s, &sub(&far, &x0));
        let r = map.restore(&z, &z, y)?;
        let v = p.objective.eval(&r, y);
        Some((r, v))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = x0.clone();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match at(mid) {
            Some((r, v)) if v <= budget => {
                best = r;
                lo = mid;
            }
            _ => hi = mid,
        }
    }
    if let Some((r, v)) = at(1.0) {
        if v <= budget {
            best = r;
        }
    }
    Ok(best)
}
