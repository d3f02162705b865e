use super::{sample_pairs, RegularityQuery};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{
    in_directional_cone, normal_cone, pair_norm, Cone, ConvexSet, DirectionSpec, Point, ProductPoint,
};
use crate::linalg::{norm2, op_norm, rank, sub};
use crate::maps::{membership_tol, SetValuedMap, SmoothFn};
use crate::serde_ext::{real, reals};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Largest generator count handled by the face enumeration.
const MAX_GENERATORS: usize = 16;

/// `m_F(x, y) = inf{‖Dg(x)ᵀy*‖ : y* ∈ N_K(g(x) − y), ‖y*‖ = 1}`.
///
/// A single-valued map is treated as `K = {0}`. The minimum over the unit
/// sphere of a polyhedral normal cone is attained in the relative interior of
/// a face spanned by linearly independent generators, where it solves a
/// generalized eigenproblem; every such face is enumerated. Returns `+∞`
/// when the normal cone is `{0}`.
pub fn coderivative_slope(map: &SetValuedMap, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(map.x_dim(), x.len())?;
    check_dim(map.y_dim(), y.len())?;
    if !map.in_domain(x) {
        return Err(Error::InvalidInput("x lies outside the map's domain".into()));
    }
    let d = map.image_distance_raw(x, y);
    if d > membership_tol(y) {
        return Err(Error::NotInSet { distance: d });
    }
    let jac = map.func().jacobian(x);
    let q = &jac * jac.transpose();
    let cone = match map {
        SetValuedMap::SingleSmooth { .. } => Cone::WholeSpace { dim: map.y_dim() },
        SetValuedMap::SmoothMinusConvex { g, set, .. } => {
            let p = set.project(&sub(&g.eval(x), y))?;
            if let ConvexSet::Ball { center, radius } = set {
                if norm2(&sub(&p, center)) < radius - 1e-9 * (1.0 + radius) {
                    return Ok(f64::INFINITY);
                }
                return Err(Error::Unsupported(
                    "normal cone of a ball boundary point is not polyhedral".into(),
                ));
            }
            normal_cone(set, &Point::new(p))?
        }
    };
    match cone {
        Cone::Zero { .. } => Ok(f64::INFINITY),
        Cone::WholeSpace { .. } => Ok(min_eigenvalue(&q).max(0.0).sqrt()),
        Cone::Generated { generators, .. } => min_over_cone(&q, &generators),
        Cone::Inequality { .. } => Err(Error::Unsupported("normal cone given by inequalities".into())),
    }
}

fn min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    q.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `min √(yᵀQy)` over unit `y` in the cone generated by `gens`.
fn min_over_cone(q: &DMatrix<f64>, gens: &[Vec<f64>]) -> Result<f64> {
    let gens: Vec<&Vec<f64>> = gens.iter().filter(|g| norm2(g) > 0.0).collect();
    if gens.is_empty() {
        return Ok(f64::INFINITY);
    }
    if gens.len() > MAX_GENERATORS {
        return Err(Error::Unsupported(format!(
            "normal cone with {} generators exceeds the enumeration limit {MAX_GENERATORS}",
            gens.len()
        )));
    }
    let m = gens[0].len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << gens.len()) {
        let subset: Vec<Vec<f64>> = (0..gens.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| gens[i].clone())
            .collect();
        let k = subset.len();
        if k > m || rank(&subset, m, 1e-10) < k {
            continue;
        }
        let g = DMatrix::from_fn(m, k, |r, c| subset[c][r]);
        if let Some(v) = face_minimum(q, &g) {
            best = best.min(v);
        }
    }
    Ok(best.max(0.0).sqrt())
}

/// Smallest generalized eigenvalue of `(GᵀQG, GᵀG)` whose eigenvector is a
/// nonnegative combination of the columns of `G`.
fn face_minimum(q: &DMatrix<f64>, g: &DMatrix<f64>) -> Option<f64> {
    let a = g.transpose() * q * g;
    let b = g.transpose() * g;
    let l = b.cholesky()?.l();
    let linv = l.clone().try_inverse()?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut best: Option<f64> = None;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let v: DVector<f64> = eig.eigenvectors.column(i).into();
        let mu = linv.transpose() * v;
        let scale = mu.amax();
        let tol = 1e-12 * scale;
        if mu.iter().all(|&t| t >= -tol) || mu.iter().all(|&t| t <= tol) {
            best = Some(best.map_or(lam, |b| b.min(lam)));
        }
    }
    best
}

/// Outcome of the compared-slope check `‖Dg_pert(x)‖ ≤ c·m_F(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCondition {
    pub holds: bool,
    #[serde(with = "reals")]
    pub worst_x: Vec<f64>,
    #[serde(with = "reals")]
    pub worst_y: Vec<f64>,
    /// `min (c·m_F − ‖Dg_pert‖₂)` over the sampled graph points.
    #[serde(with = "real")]
    pub margin: f64,
    #[serde(with = "real")]
    pub min_coderivative_slope: f64,
    pub samples: usize,
}

/// Checks `‖Dg_pert(x)‖ ≤ c·m_F(x, y)` on graph points of `F` in
/// `B((x̄,ȳ), δ) ∩ ((x̄,ȳ) + cone B((u,v), δ))`, the base point included.
///
/// Graph points are the nearest points of `F(x)` to the y-parts of the
/// query's stratified samples, using at most 512 of them.
pub fn perturbation_condition(
    map: &SetValuedMap,
    g_pert: &SmoothFn,
    q: &RegularityQuery,
    c: f64,
) -> Result<PerturbationCondition> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidInput("c must lie in (0, 1)".into()));
    }
    g_pert.validate()?;
    check_dim(map.x_dim(), g_pert.in_dim())?;
    check_dim(map.y_dim(), g_pert.out_dim())?;
    q.validate()?;
    let cone = DirectionSpec::new(q.direction.dir.clone(), q.delta)?;
    let mut sub_q = q.clone();
    sub_q.samples = q.samples.clamp(16, 512);
    let mut points = vec![(q.base_x.clone(), q.base_y.clone())];
    for p in sample_pairs(&sub_q)? {
        if !map.in_domain(&p.x) {
            continue;
        }
        let y = map.graph_point(&p.x, &p.y)?;
        let (dx, dy) = (sub(&p.x, &q.base_x), sub(&y, &q.base_y));
        if pair_norm(&dx, &dy) > q.delta || !in_directional_cone(&ProductPoint::from_vecs(dx, dy), &cone)? {
            continue;
        }
        points.push((p.x, y));
    }
    let mut out = PerturbationCondition {
        holds: true,
        worst_x: q.base_x.clone(),
        worst_y: q.base_y.clone(),
        margin: f64::INFINITY,
        min_coderivative_slope: f64::INFINITY,
        samples: points.len(),
    };
    for (x, y) in points {
        let m = coderivative_slope(map, &x, &y)?;
        let dn = op_norm(&g_pert.jacobian(&x));
        let margin = if m.is_infinite() { f64::INFINITY } else { c * m - dn };
        out.min_coderivative_slope = out.min_coderivative_slope.min(m);
        if margin < out.margin {
            out.margin = margin;
            out.worst_x = x;
            out.worst_y = y;
        }
    }
    out.holds = out.margin >= 0.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::SearchRegion;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn linear_zero(a: Vec<Vec<f64>>) -> SetValuedMap {
        let m = a.len();
        SetValuedMap::smooth_minus_convex(
            SmoothFn::Linear { matrix: a },
            ConvexSet::singleton(vec![0.0; m]).unwrap(),
            None,
        )
        .unwrap()
    }

    /// Smallest singular value of a 2×2 matrix from the closed form of `AᵀA`'s eigenvalues.
    fn sigma_min_2x2(a: &[Vec<f64>]) -> f64 {
        let (p, q, r, s) = (a[0][0], a[0][1], a[1][0], a[1][1]);
        let t = p * p + q * q + r * r + s * s;
        let det = p * s - q * r;
        let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
        ((t - disc) / 2.0).max(0.0).sqrt()
    }

    #[test]
    fn examples() {
        let id = linear_zero(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_abs_diff_eq!(
            coderivative_slope(&id, &[0.0, 0.0], &[0.0, 0.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let a = vec![vec![3.0, 0.0], vec![0.0, 1.0 / 3.0]];
        let f = linear_zero(a.clone());
        let m = coderivative_slope(&f, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((m - sigma_min_2x2(&a)).abs() <= 0.01 * sigma_min_2x2(&a));
        assert_abs_diff_eq!(m, 1.0 / 3.0, epsilon = 1e-12);

        let half =
            SetValuedMap::smooth_minus_convex(SmoothFn::Identity { dim: 1 }, ConvexSet::nonpositive_orthant(1), None)
                .unwrap();
        assert_abs_diff_eq!(coderivative_slope(&half, &[0.0], &[0.0]).unwrap(), 1.0, epsilon = 1e-12);
        // Interior point: N_K = {0}.
        assert_eq!(coderivative_slope(&half, &[-1.0], &[0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn cone_restricts_the_minimum() {
        // g(x) = diag(2, 1/2)x, K = (−∞,0] × R: N_K(0) = [0,∞) × {0}, so only e₁ counts.
        let k = ConvexSet::boxed(vec![f64::NEG_INFINITY, f64::NEG_INFINITY], vec![0.0, f64::INFINITY]).unwrap();
        let f = SetValuedMap::smooth_minus_convex(
            SmoothFn::Linear {
                matrix: vec![vec![2.0, 0.0], vec![0.0, 0.5]],
            },
            k,
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(
            coderivative_slope(&f, &[0.0, 0.0], &[0.0, 0.0]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        // Orthant normal cone: the minimum over the quarter circle is again at e₂ for this Q.
        let f = SetValuedMap::smooth_minus_convex(
            SmoothFn::Linear {
                matrix: vec![vec![2.0, 0.0], vec![0.0, 0.5]],
            },
            ConvexSet::nonpositive_orthant(2),
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(
            coderivative_slope(&f, &[0.0, 0.0], &[0.0, 0.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn interior_face_minimum() {
        // Q = [[1, −0.9], [−0.9, 1]] has its smallest eigenvector (1,1)/√2 inside the orthant.
        let j = vec![vec![1.0, 0.0], vec![-0.9, (1.0f64 - 0.81).sqrt()]];
        let f =
            SetValuedMap::smooth_minus_convex(SmoothFn::Linear { matrix: j }, ConvexSet::nonpositive_orthant(2), None)
                .unwrap();
        assert_abs_diff_eq!(
            coderivative_slope(&f, &[0.0, 0.0], &[0.0, 0.0]).unwrap(),
            0.1f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ball_boundary_unsupported() {
        let f = SetValuedMap::smooth_minus_convex(
            SmoothFn::Identity { dim: 2 },
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            None,
        )
        .unwrap();
        assert!(matches!(
            coderivative_slope(&f, &[1.0, 0.0], &[0.0, 0.0]),
            Err(Error::Unsupported(_))
        ));
        assert_eq!(coderivative_slope(&f, &[0.2, 0.0], &[0.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn off_graph_rejected() {
        let f = linear_zero(vec![vec![1.0]]);
        assert!(matches!(
            coderivative_slope(&f, &[1.0], &[0.0]),
            Err(Error::NotInSet { .. })
        ));
    }

    fn sin_condition(c: f64) -> PerturbationCondition {
        let f = linear_zero(vec![vec![1.0]]);
        let q = RegularityQuery::new(
            f.clone(),
            vec![0.0],
            vec![0.0],
            1.0,
            3.0,
            f64::INFINITY,
            SearchRegion::cube(1, 5.0, 16),
        )
        .unwrap()
        .with_samples(200, 4);
        perturbation_condition(&f, &SmoothFn::ScaledSin { scale: 0.5, dim: 1 }, &q, c).unwrap()
    }

    #[test]
    fn compared_slope_flips_with_c() {
        let ok = sin_condition(0.6);
        assert!(ok.holds);
        assert!(ok.margin >= 0.1 - 1e-12);
        let bad = sin_condition(0.4);
        assert!(!bad.holds);
        assert!(bad.worst_x[0].cos().abs() > 0.8);
    }

    #[test]
    fn zero_perturbation_margin() {
        let f = linear_zero(vec![vec![2.0]]);
        let q = RegularityQuery::new(
            f.clone(),
            vec![0.0],
            vec![0.0],
            1.0,
            1.0,
            f64::INFINITY,
            SearchRegion::cube(1, 3.0, 16),
        )
        .unwrap();
        let r = perturbation_condition(&f, &SmoothFn::Zero { in_dim: 1, out_dim: 1 }, &q, 0.3).unwrap();
        assert!(r.holds);
        assert_abs_diff_eq!(r.margin, 0.3 * 2.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_singular_values(entries in proptest::collection::vec(-3.0f64..3.0, 4), s in prop_oneof![Just(0.5), Just(2.0)]) {
            let a = vec![entries[0..2].to_vec(), entries[2..4].to_vec()];
            let m = coderivative_slope(&linear_zero(a.clone()), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
            let sv = sigma_min_2x2(&a);
            prop_assert!((m - sv).abs() <= 1e-9 * (1.0 + sv));
            let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| s * v).collect()).collect();
            let ms = coderivative_slope(&linear_zero(scaled), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
            prop_assert!((ms - s * m).abs() <= 1e-12 * (1.0 + m));
        }

        #[test]
        fn homogeneous_on_orthant(entries in proptest::collection::vec(-3.0f64..3.0, 4), s in prop_oneof![Just(0.5), Just(2.0)]) {
            let a = vec![entries[0..2].to_vec(), entries[2..4].to_vec()];
            let mk = |a: Vec<Vec<f64>>| SetValuedMap::smooth_minus_convex(SmoothFn::Linear { matrix: a }, ConvexSet::nonpositive_orthant(2), None).unwrap();
            let m = coderivative_slope(&mk(a.clone()), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
            let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| s * v).collect()).collect();
            let ms = coderivative_slope(&mk(scaled), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
            prop_assert!((ms - s * m).abs() <= 1e-12 * (1.0 + m));
            // Brute force over the quarter circle of unit y* ≥ 0.
            let brute = (0..=20_000).map(|k| {
                let t = std::f64::consts::FRAC_PI_2 * k as f64 / 20_000.0;
                let y = [t.cos(), t.sin()];
                let v = [a[0][0] * y[0] + a[1][0] * y[1], a[0][1] * y[0] + a[1][1] * y[1]];
                norm2(&v)
            }).fold(f64::INFINITY, f64::min);
            prop_assert!(m <= brute + 1e-12);
            prop_assert!(m >= brute - 1e-3 * (1.0 + brute));
        }
    }
}
