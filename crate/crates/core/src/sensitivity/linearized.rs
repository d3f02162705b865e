use super::ParametricProgram;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{normal_cone, tangent_cone, Cone, Point};
use crate::linalg::{dot, matrix_to_rows, norm_inf, random_unit, unit_axis};
use crate::maps::{membership_tol, SearchRegion};
use crate::serde_ext::{real, reals};
use crate::solvers::lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Point of `K` nearest `g(x₀)`, after checking `x₀ ∈ Φ(0)`.
fn constraint_point(p: &ParametricProgram, x0: &[f64]) -> Result<Point> {
    check_dim(p.x_dim(), x0.len())?;
    let y0 = vec![0.0; p.y_dim()];
    let dist = p.infeasibility(x0, &y0);
    if dist > membership_tol(&y0) {
        return Err(Error::NotInSet { distance: dist });
    }
    Ok(Point::new(p.set.project(&p.g.eval(x0))?))
}

fn jacobian_rows(p: &ParametricProgram, x0: &[f64]) -> Vec<Vec<f64>> {
    matrix_to_rows(&p.g.jacobian(x0))
}

/// `Jᵀv` for `J` given by rows.
fn jt_times(j: &[Vec<f64>], v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (row, vi) in j.iter().zip(v) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    out
}

/// `T_K(g(x₀))` as rows `R` with the cone `{k : Rk ≤ 0}`.
fn tangent_rows(p: &ParametricProgram, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
    let z = constraint_point(p, x0)?;
    tangent_cone(&p.set, &z)?
        .inequality_rows()
        .ok_or_else(|| Error::Unsupported("tangent cone without an inequality description".into()))
}

/// `Λ(x₀) = {λ ∈ N_K(g(x₀)) : ∇ₓf(x₀, 0) + Jg(x₀)ᵀλ = 0}`, kept as
/// `λ = Gμ, μ ≥ 0` over the normal-cone generators `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSet {
    #[serde(with = "reals")]
    pub x0: Vec<f64>,
    /// Rows of `Jg(x₀)`.
    pub jacobian: Vec<Vec<f64>>,
    #[serde(with = "reals")]
    pub grad_x: Vec<f64>,
    #[serde(with = "reals")]
    pub grad_y: Vec<f64>,
    /// Generators of `N_K(g(x₀))`.
    pub generators: Vec<Vec<f64>>,
    pub empty: bool,
    /// A member found by the feasibility LP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member: Option<Vec<f64>>,
}

impl MultiplierSet {
    fn nx(&self) -> usize {
        self.x0.len()
    }

    fn ny(&self) -> usize {
        self.grad_y.len()
    }

    fn lambda(&self, mu: &[f64]) -> Vec<f64> {
        let mut l = vec![0.0; self.ny()];
        for (g, m) in self.generators.iter().zip(mu) {
            for (li, gi) in l.iter_mut().zip(g) {
                *li += m * gi;
            }
        }
        l
    }

    /// Minimizes `⟨c, λ⟩` over the set. `Ok(None)` when the set is empty.
    fn minimize(&self, c: &[f64]) -> Result<Option<(f64, Option<Vec<f64>>)>> {
        let n = self.nx();
        if self.generators.is_empty() {
            // Only λ = 0 is a normal vector.
            return Ok((norm_inf(&self.grad_x) <= 1e-12).then(|| (0.0, Some(vec![0.0; self.ny()]))));
        }
        let cost: Vec<f64> = self.generators.iter().map(|g| dot(g, c)).collect();
        let mut lp = LinearProgram::new(cost);
        for i in 0..n {
            let row: Vec<f64> = self
                .generators
                .iter()
                .map(|g| self.jacobian.iter().zip(g).map(|(jr, gk)| jr[i] * gk).sum())
                .collect();
            lp = lp.eq(row, -self.grad_x[i]);
        }
        let s = solve_lp(&lp)?;
        match s.status {
            LpStatus::Optimal => Ok(Some((s.objective, Some(self.lambda(&s.x))))),
            LpStatus::Unbounded => Ok(Some((f64::NEG_INFINITY, None))),
            LpStatus::Infeasible => Ok(None),
            LpStatus::NumericalFailure => Err(Error::NumericalFailure("multiplier LP failed".into())),
        }
    }

    /// `‖∇ₓf + Jᵀλ‖∞`.
    pub fn stationarity_residual(&self, lambda: &[f64]) -> f64 {
        let r = jt_times(&self.jacobian, lambda, self.nx());
        r.iter()
            .zip(&self.grad_x)
            .map(|(a, b)| (a + b).abs())
            .fold(0.0, f64::max)
    }

    /// Distance-like residual of `λ` from `N_K(g(x₀))`.
    pub fn normal_cone_residual(&self, lambda: &[f64]) -> Result<f64> {
        let cone = if self.generators.is_empty() {
            Cone::Zero { dim: self.ny() }
        } else {
            Cone::Generated {
                dim: self.ny(),
                generators: self.generators.clone(),
            }
        };
        cone.residual(lambda)
    }

    pub fn contains(&self, lambda: &[f64], tol: f64) -> Result<bool> {
        check_dim(self.ny(), lambda.len())?;
        Ok(self.stationarity_residual(lambda) <= tol && self.normal_cone_residual(lambda)? <= tol)
    }

    /// Whether every coordinate of `λ` has min = max over the set (within `1e−9`).
    pub fn is_singleton(&self) -> Result<bool> {
        if self.empty {
            return Ok(false);
        }
        for i in 0..self.ny() {
            let e = unit_axis(self.ny(), i, 1.0);
            let lo = self.minimize(&e)?.map_or(f64::NAN, |v| v.0);
            let hi = self
                .minimize(&e.iter().map(|v| -v).collect::<Vec<_>>())?
                .map_or(f64::NAN, |v| -v.0);
            if !(hi - lo <= 1e-9 * (1.0 + lo.abs())) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Assembles `Λ(x₀)` and decides emptiness with a feasibility LP.
pub fn multiplier_set(p: &ParametricProgram, x0: &[f64]) -> Result<MultiplierSet> {
    let z = constraint_point(p, x0)?;
    let y0 = vec![0.0; p.y_dim()];
    let generators = match normal_cone(&p.set, &z)? {
        Cone::Inequality { .. } => return Err(Error::Unsupported("normal cone without generators".into())),
        cone => cone.generators().expect("generator form"),
    };
    let mut set = MultiplierSet {
        x0: x0.to_vec(),
        jacobian: jacobian_rows(p, x0),
        grad_x: p.objective.grad_x(x0, &y0),
        grad_y: p.objective.grad_y(x0, &y0),
        generators,
        empty: true,
        member: None,
    };
    let zero = vec![0.0; p.y_dim()];
    if let Some((_, member)) = set.minimize(&zero)? {
        set.empty = false;
        set.member = member;
    }
    Ok(set)
}

/// Linearized primal problem: `min ∇ₓf·h + ∇ᵧf·d  s.t.  Jg(x₀)h − d ∈ T_K(g(x₀))`.
///
/// The returned objective includes the constant `∇ᵧf·d`.
pub fn linearized_primal(p: &ParametricProgram, x0: &[f64], d: &[f64]) -> Result<LpSolution> {
    check_dim(p.y_dim(), d.len())?;
    let rows = tangent_rows(p, x0)?;
    let n = p.x_dim();
    let y0 = vec![0.0; p.y_dim()];
    let j = jacobian_rows(p, x0);
    let mut lp = LinearProgram::free(p.objective.grad_x(x0, &y0));
    for r in &rows {
        lp = lp.leq(jt_times(&j, r, n), dot(r, d));
    }
    let mut s = solve_lp(&lp)?;
    let shift = dot(&p.objective.grad_y(x0, &y0), d);
    s.objective += shift;
    s.dual_objective += shift;
    Ok(s)
}

/// Linearized dual: extremes of `D_yL(x₀, λ, 0)d = ∇ᵧf·d − ⟨λ, d⟩` over `Λ(x₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    /// `max`; `−∞` when `Λ(x₀)` is empty, so the common value with the linearized primal is infinite.
    #[serde(with = "real")]
    pub value: f64,
    /// `min`; `+∞` when `Λ(x₀)` is empty.
    #[serde(with = "real")]
    pub min_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmin: Option<Vec<f64>>,
    pub empty: bool,
}

pub fn linearized_dual(p: &ParametricProgram, x0: &[f64], d: &[f64]) -> Result<DualReport> {
    check_dim(p.y_dim(), d.len())?;
    let set = multiplier_set(p, x0)?;
    dual_over(&set, d)
}

pub(super) fn dual_over(set: &MultiplierSet, d: &[f64]) -> Result<DualReport> {
    let base = dot(&set.grad_y, d);
    if set.empty {
        return Ok(DualReport {
            value: f64::NEG_INFINITY,
            min_value: f64::INFINITY,
            argmax: None,
            argmin: None,
            empty: true,
        });
    }
    let neg_d: Vec<f64> = d.iter().map(|v| -v).collect();
    // max(base − ⟨λ,d⟩) = base − min⟨λ,d⟩.
    let (lo, argmax) = set
        .minimize(d)?
        .ok_or(Error::NumericalFailure("multiplier set became empty".into()))?;
    let (hi_neg, argmin) = set
        .minimize(&neg_d)?
        .ok_or(Error::NumericalFailure("multiplier set became empty".into()))?;
    Ok(DualReport {
        value: base - lo,
        min_value: base + hi_neg,
        argmax,
        argmin,
        empty: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleDirectionReport {
    /// `Jg(x₀)h − d ∈ T_K(g(x₀))` within `10⁻⁸`.
    pub fd_condition: bool,
    #[serde(with = "real")]
    pub cone_residual: f64,
    /// `d(x₀ + th, Φ(td))/t` at the last level is below `10⁻³`.
    pub path_ok: bool,
    /// `(t, d(x₀ + th, Φ(td))/t)` per level.
    pub ratios: Vec<(f64, f64)>,
}

/// Checks the linearized condition for `h` to be a feasible direction relative
/// to `d`, and follows the straight path `x₀ + th` into `Φ(td)`.
pub fn feasible_direction_check(
    p: &ParametricProgram,
    x0: &[f64],
    h: &[f64],
    d: &[f64],
) -> Result<FeasibleDirectionReport> {
    check_dim(p.x_dim(), h.len())?;
    check_dim(p.y_dim(), d.len())?;
    let z = constraint_point(p, x0)?;
    let cone = tangent_cone(&p.set, &z)?;
    let jh = crate::linalg::mat_vec(&p.g.jacobian(x0), h);
    let w: Vec<f64> = jh.iter().zip(d).map(|(a, b)| a - b).collect();
    let cone_residual = cone.residual(&w)?;
    let map = p.constraint_map();
    let region = SearchRegion::new(p.search.lo.clone(), p.search.hi.clone(), p.search.resolution.min(16));
    let mut ratios = Vec::new();
    for k in 0..8 {
        let t = 0.1 * 0.5f64.powi(k);
        let x: Vec<f64> = x0.iter().zip(h).map(|(a, b)| a + t * b).collect();
        let y: Vec<f64> = d.iter().map(|v| t * v).collect();
        let dist = match map.inverse_distance(&x, &y, &region) {
            Ok(w) => w.distance,
            Err(Error::EmptyInverse) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        ratios.push((t, dist / t));
    }
    let last = ratios.last().map_or(f64::INFINITY, |r| r.1);
    Ok(FeasibleDirectionReport {
        fd_condition: cone_residual <= 1e-8,
        cone_residual,
        path_ok: last < 1e-3,
        ratios,
    })
}

/// `Dg(x₀)X − T_K(g(x₀))`.
pub(super) struct LinearizedRange {
    n: usize,
    j: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
}

impl LinearizedRange {
    pub(super) fn new(p: &ParametricProgram, x0: &[f64]) -> Result<Self> {
        Ok(LinearizedRange {
            n: p.x_dim(),
            j: jacobian_rows(p, x0),
            rows: tangent_rows(p, x0)?,
        })
    }

    /// Feasibility of `Jh − k = w`, `k ∈ T_K`, over free `(h, k)`.
    pub(super) fn contains(&self, w: &[f64]) -> Result<bool> {
        let (n, m) = (self.n, w.len());
        let mut lp = LinearProgram::free(vec![0.0; n + m]);
        for r in &self.rows {
            let mut row = vec![0.0; n];
            row.extend(r);
            lp = lp.leq(row, 0.0);
        }
        for i in 0..m {
            let mut row = self.j[i].clone();
            row.extend(unit_axis(m, i, -1.0));
            lp = lp.eq(row, w[i]);
        }
        Ok(solve_lp(&lp)?.status == LpStatus::Optimal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobinsonReport {
    pub holds: bool,
    pub probes: usize,
    /// Probe directions `e` for which `d + ρe ∉ Dg(x₀)X − T_K(g(x₀))`.
    pub failed: Vec<Vec<f64>>,
}

/// Probes `d ∈ int{Dg(x₀)X − T_K(g(x₀))}` with the ball of radius `ρ` around
/// `d`: each of the `±` axes and 16 seeded random unit directions must give a
/// feasible `Jg(x₀)h − k = d + ρe`, `k ∈ T_K`.
pub fn robinson_check(p: &ParametricProgram, x0: &[f64], d: &[f64], rho: f64, seed: u64) -> Result<RobinsonReport> {
    check_dim(p.y_dim(), d.len())?;
    if !(rho > 0.0) {
        return Err(Error::InvalidInput("ρ must be positive".into()));
    }
    let range = LinearizedRange::new(p, x0)?;
    let m = p.y_dim();
    let mut probes: Vec<Vec<f64>> = (0..m)
        .flat_map(|i| [unit_axis(m, i, 1.0), unit_axis(m, i, -1.0)])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    probes.extend((0..16).map(|_| random_unit(&mut rng, m)));
    let mut failed = Vec::new();
    for e in &probes {
        let w: Vec<f64> = d.iter().zip(e).map(|(a, b)| a + rho * b).collect();
        if !range.contains(&w)? {
            failed.push(e.clone());
        }
    }
    Ok(RobinsonReport {
        holds: failed.is_empty(),
        probes: probes.len(),
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexSet;
    use crate::maps::SmoothFn;
    use crate::sensitivity::Objective;
    use crate::solvers::SearchSpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy() -> ParametricProgram {
        ParametricProgram::builtin("lp-toy-leq").unwrap()
    }

    #[test]
    fn multiplier_examples() {
        let s = multiplier_set(&toy(), &[0.0]).unwrap();
        assert!(!s.empty);
        assert_abs_diff_eq!(s.member.as_ref().unwrap()[0], 1.0, epsilon = 1e-12);
        assert!(s.is_singleton().unwrap());

        let sq = ParametricProgram::builtin("square-geq").unwrap();
        let s = multiplier_set(&sq, &[0.0]).unwrap();
        assert_eq!(s.member, Some(vec![0.0]));
        assert!(s.is_singleton().unwrap());

        // Interior point with nonzero gradient: N_K = {0} and −1 ≠ 0.
        let s = multiplier_set(&toy(), &[-1.0]).unwrap();
        assert!(s.empty);
        assert!(!s.is_singleton().unwrap());

        let two = ParametricProgram::builtin("min-two-leq").unwrap();
        let s = multiplier_set(&two, &[0.0]).unwrap();
        assert!(!s.empty);
        assert!(!s.is_singleton().unwrap());
        assert!(s.contains(&[0.3, 0.7], 1e-9).unwrap());
        assert!(!s.contains(&[0.5, 0.7], 1e-9).unwrap());
        assert!(!s.contains(&[-0.5, 1.5], 1e-9).unwrap());
    }

    #[test]
    fn off_feasible_point_rejected() {
        assert!(matches!(multiplier_set(&toy(), &[0.5]), Err(Error::NotInSet { .. })));
    }

    #[test]
    fn primal_examples() {
        let s = linearized_primal(&toy(), &[0.0], &[1.0]).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.objective, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-12);

        let sq = ParametricProgram::builtin("square-geq").unwrap();
        let s = linearized_primal(&sq, &[0.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-12);
        let s = linearized_primal(&sq, &[0.0], &[0.0]).unwrap();
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dual_examples() {
        let r = linearized_dual(&toy(), &[0.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(r.value, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.min_value, -1.0, epsilon = 1e-12);

        let sq = ParametricProgram::builtin("square-geq").unwrap();
        for d in [-1.0, 0.5, 2.0] {
            let r = linearized_dual(&sq, &[0.0], &[d]).unwrap();
            assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
        }

        let two = ParametricProgram::builtin("min-two-leq").unwrap();
        let r = linearized_dual(&two, &[0.0], &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.min_value, -1.0, epsilon = 1e-12);

        let r = linearized_dual(&toy(), &[-1.0], &[1.0]).unwrap();
        assert!(r.empty);
        assert_eq!(r.value, f64::NEG_INFINITY);
        // Primal side of the same instance is unbounded below.
        let s = linearized_primal(&toy(), &[-1.0], &[1.0]).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn dual_optimizers_are_multipliers() {
        let two = ParametricProgram::builtin("min-two-leq").unwrap();
        let set = multiplier_set(&two, &[0.0]).unwrap();
        let r = dual_over(&set, &[0.3, -0.8]).unwrap();
        for l in [r.argmax.unwrap(), r.argmin.unwrap()] {
            assert!(set.stationarity_residual(&l) <= 1e-7);
            assert!(set.normal_cone_residual(&l).unwrap() <= 1e-7);
        }
    }

    #[test]
    fn feasible_direction_examples() {
        let r = feasible_direction_check(&toy(), &[0.0], &[0.0], &[0.0]).unwrap();
        assert!(r.fd_condition && r.path_ok);
        let r = feasible_direction_check(&toy(), &[0.0], &[1.0], &[1.0]).unwrap();
        assert!(r.fd_condition && r.path_ok);
        let r = feasible_direction_check(&toy(), &[0.0], &[1.0], &[-1.0]).unwrap();
        assert!(!r.fd_condition);
        assert_abs_diff_eq!(r.cone_residual, 2.0, epsilon = 1e-12);
        assert!(!r.path_ok);
    }

    #[test]
    fn robinson_examples() {
        // Square nonsingular Jacobian: Dg X is everything.
        let p = ParametricProgram::new(
            Objective::quadratic(vec![0.0, 0.0], vec![], vec![0.0, 0.0]),
            SmoothFn::Linear {
                matrix: vec![vec![2.0, 1.0], vec![0.0, 1.0]],
            },
            ConvexSet::singleton(vec![0.0, 0.0]).unwrap(),
            SearchSpec::new(vec![-1.0, -1.0], vec![1.0, 1.0], 8),
        )
        .unwrap();
        assert!(robinson_check(&p, &[0.0, 0.0], &[0.4, -1.0], 1e-2, 1).unwrap().holds);

        assert!(robinson_check(&toy(), &[0.0], &[1.0], 0.1, 1).unwrap().holds);

        let p = ParametricProgram::new(
            Objective::quadratic(vec![0.0], vec![], vec![0.0]),
            SmoothFn::Zero { in_dim: 1, out_dim: 1 },
            ConvexSet::singleton(vec![0.0]).unwrap(),
            SearchSpec::new(vec![-1.0], vec![1.0], 8),
        )
        .unwrap();
        for d in [0.0, 1.0] {
            let r = robinson_check(&p, &[0.0], &[d], 1e-3, 1).unwrap();
            assert!(!r.holds);
            assert_eq!(r.probes, 18);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn strong_duality(d1 in -2.0f64..2.0, d2 in -2.0f64..2.0) {
            let two = ParametricProgram::builtin("min-two-leq").unwrap();
            let d = [d1, d2];
            let primal = linearized_primal(&two, &[0.0], &d).unwrap();
            let dual = linearized_dual(&two, &[0.0], &d).unwrap();
            prop_assert!(primal.is_optimal());
            prop_assert!((primal.objective - dual.value).abs() <= 1e-7);
            // Closed form: −min(d₁, d₂).
            prop_assert!((dual.value + d1.min(d2)).abs() <= 1e-9);
        }

        #[test]
        fn dual_bounds_homogeneous(d1 in -2.0f64..2.0, d2 in -2.0f64..2.0, s in 0.1f64..10.0) {
            let two = ParametricProgram::builtin("min-two-leq").unwrap();
            let a = linearized_dual(&two, &[0.0], &[d1, d2]).unwrap();
            let b = linearized_dual(&two, &[0.0], &[s * d1, s * d2]).unwrap();
            prop_assert!((b.value - s * a.value).abs() <= 1e-9 * (1.0 + b.value.abs()));
            prop_assert!((b.min_value - s * a.min_value).abs() <= 1e-9 * (1.0 + b.min_value.abs()));
            prop_assert!(a.min_value <= a.value + 1e-12);
        }
    }
}
