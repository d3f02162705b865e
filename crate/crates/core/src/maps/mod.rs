//! Set-valued maps `F` with image distance `d(y, F(x))`, inverse distance
//! `d(x, F⁻¹(y))` and the lower semicontinuous envelope `φ`.

mod smooth;

pub use smooth::{fd_jacobian, SmoothFn};

use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexSet;
use crate::linalg::{add, dist2, mat_vec, norm2, pinv_solve, random_unit, sub};
use crate::serde_ext::{real, reals};
use crate::solvers::qp::project_polyhedron;
use crate::solvers::search::{evaluate_grid, k_best, SearchSpec};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Axis-aligned domain box; `±∞` allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    #[serde(with = "reals")]
    pub lo: Vec<f64>,
    #[serde(with = "reals")]
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn whole(n: usize) -> Self {
        BoxDomain {
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| v >= l && v <= h)
    }

    fn validate(&self, n: usize) -> Result<()> {
        check_dim(n, self.lo.len())?;
        check_dim(n, self.hi.len())?;
        if self
            .lo
            .iter()
            .zip(&self.hi)
            .any(|(l, h)| l.is_nan() || h.is_nan() || l > h)
        {
            return Err(Error::InvalidInput("domain requires lo ≤ hi".into()));
        }
        Ok(())
    }
}

fn default_resolution() -> usize {
    16
}
fn default_candidates() -> usize {
    4
}

/// Finite box in `X` searched for preimage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    #[serde(with = "reals")]
    pub lo: Vec<f64>,
    #[serde(with = "reals")]
    pub hi: Vec<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Best grid nodes used as restoration starts, in addition to the query point.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
}

impl SearchRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Self {
        SearchRegion {
            lo,
            hi,
            resolution,
            candidates: default_candidates(),
        }
    }

    /// Cube `[−r, r]ⁿ`.
    pub fn cube(n: usize, r: f64, resolution: usize) -> Self {
        Self::new(vec![-r; n], vec![r; n], resolution)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.spec().validate()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.spec().contains(x, tol)
    }

    pub fn spec(&self) -> SearchSpec {
        SearchSpec::new(self.lo.clone(), self.hi.clone(), self.resolution)
    }

    /// Diameter of one grid cell.
    pub fn cell_diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| ((h - l) / self.resolution as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Inverse-distance result with the preimage point attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseDistance {
    #[serde(with = "real")]
    pub distance: f64,
    #[serde(with = "reals")]
    pub witness: Vec<f64>,
}

/// Shrinking-ball evaluation of `φ(x, y) = liminf_{u→x} d(y, F(u))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeProfile {
    /// `(radius, sampled min of d(y, F(·)) over the ball)` per level.
    pub levels: Vec<(f64, f64)>,
    /// Richardson-extrapolated limit of the level minima.
    #[serde(with = "real")]
    pub estimate: f64,
    pub converged: bool,
}

/// Set-valued map built from builtin smooth maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum SetValuedMap {
    /// `F(x) = {f(x)}`.
    SingleSmooth {
        f: SmoothFn,
        #[serde(default)]
        domain: Option<BoxDomain>,
    },
    /// `F(x) = g(x) − K`.
    SmoothMinusConvex {
        g: SmoothFn,
        set: ConvexSet,
        #[serde(default)]
        domain: Option<BoxDomain>,
    },
}

/// Preimage membership tolerance `1e−7·(1 + ‖y‖)`.
pub fn membership_tol(y: &[f64]) -> f64 {
    1e-7 * (1.0 + norm2(y))
}

const RESTORE_ITERS: usize = 200;

impl SetValuedMap {
    pub fn single_smooth(f: SmoothFn, domain: Option<BoxDomain>) -> Result<Self> {
        let m = SetValuedMap::SingleSmooth { f, domain };
        m.validate()?;
        Ok(m)
    }

    pub fn smooth_minus_convex(g: SmoothFn, set: ConvexSet, domain: Option<BoxDomain>) -> Result<Self> {
        let m = SetValuedMap::SmoothMinusConvex { g, set, domain };
        m.validate()?;
        Ok(m)
    }

    /// Dimension checks plus the Jacobian self-check on the domain.
    pub fn validate(&self) -> Result<()> {
        let f = self.func();
        f.validate()?;
        let n = f.in_dim();
        let dom = self.domain();
        dom.validate(n)?;
        if let SetValuedMap::SmoothMinusConvex { set, .. } = self {
            set.validate()?;
            check_dim(f.out_dim(), set.dim())?;
        }
        f.check_jacobian(&dom.lo, &dom.hi, 0)
    }

    pub fn func(&self) -> &SmoothFn {
        match self {
            SetValuedMap::SingleSmooth { f, .. } => f,
            SetValuedMap::SmoothMinusConvex { g, .. } => g,
        }
    }

    pub fn set(&self) -> Option<&ConvexSet> {
        match self {
            SetValuedMap::SingleSmooth { .. } => None,
            SetValuedMap::SmoothMinusConvex { set, .. } => Some(set),
        }
    }

    pub fn domain(&self) -> BoxDomain {
        let d = match self {
            SetValuedMap::SingleSmooth { domain, .. } | SetValuedMap::SmoothMinusConvex { domain, .. } => domain,
        };
        d.clone().unwrap_or_else(|| BoxDomain::whole(self.x_dim()))
    }

    pub fn x_dim(&self) -> usize {
        self.func().in_dim()
    }

    pub fn y_dim(&self) -> usize {
        self.func().out_dim()
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        match self {
            SetValuedMap::SingleSmooth { domain, .. } | SetValuedMap::SmoothMinusConvex { domain, .. } => {
                domain.as_ref().is_none_or(|d| d.contains(x))
            }
        }
    }

    /// `F + g`: same variant with `f + g` (resp. `g + g_pert`) as the smooth part.
    pub fn perturbed(&self, g_pert: &SmoothFn) -> Result<SetValuedMap> {
        check_dim(self.x_dim(), g_pert.in_dim())?;
        check_dim(self.y_dim(), g_pert.out_dim())?;
        Ok(match self {
            SetValuedMap::SingleSmooth { f, domain } => SetValuedMap::SingleSmooth {
                f: f.plus(g_pert),
                domain: domain.clone(),
            },
            SetValuedMap::SmoothMinusConvex { g, set, domain } => SetValuedMap::SmoothMinusConvex {
                g: g.plus(g_pert),
                set: set.clone(),
                domain: domain.clone(),
            },
        })
    }

    /// `d(y, F(x))` without domain or dimension checks.
    pub fn image_distance_raw(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            SetValuedMap::SingleSmooth { f, .. } => dist2(y, &f.eval(x)),
            SetValuedMap::SmoothMinusConvex { g, set, .. } => {
                let c = sub(&g.eval(x), y);
                set.distance(&c).unwrap_or(f64::INFINITY)
            }
        }
    }

    /// `d(y, F(x))`: `‖y − f(x)‖`, or `d(g(x) − y, K)` for `g − K`.
    pub fn image_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.x_dim(), x.len())?;
        check_dim(self.y_dim(), y.len())?;
        if !self.in_domain(x) {
            return Err(Error::InvalidInput("x lies outside the map's domain".into()));
        }
        Ok(self.image_distance_raw(x, y))
    }

    /// Point of `F(x)` nearest to `y_ref`.
    pub fn graph_point(&self, x: &[f64], y_ref: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            SetValuedMap::SingleSmooth { f, .. } => f.eval(x),
            SetValuedMap::SmoothMinusConvex { g, set, .. } => {
                let gx = g.eval(x);
                let k = set.project(&sub(&gx, y_ref))?;
                sub(&gx, &k)
            }
        })
    }

    /// `φ(x, y)`. Both supported variants are continuous, so `φ` equals the image distance.
    pub fn envelope_phi(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.image_distance(x, y)
    }

    /// Shrinking-ball cross-check of [`SetValuedMap::envelope_phi`].
    ///
    /// Radii `r₀·2⁻ᵏ`, `r₀ = 10⁻²(1 + ‖x‖)`, `k = 0..=8`; each level takes the
    /// minimum over the center and 64 seeded directions at three radii.
    pub fn envelope_profile(&self, x: &[f64], y: &[f64]) -> Result<EnvelopeProfile> {
        let center = self.image_distance(x, y)?;
        let n = x.len();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let dirs: Vec<Vec<f64>> = (0..64).map(|_| random_unit(&mut rng, n)).collect();
        let r0 = 1e-2 * (1.0 + norm2(x));
        let mut levels = Vec::new();
        for k in 0..=8 {
            let r = r0 * 0.5f64.powi(k);
            let mut m = center;
            for d in &dirs {
                for frac in [1.0, 0.5, 0.25] {
                    let u: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + frac * r * b).collect();
                    if self.in_domain(&u) {
                        m = m.min(self.image_distance_raw(&u, y));
                    }
                }
            }
            levels.push((r, m));
        }
        // Two Richardson passes remove the O(r) and O(r²) terms of a smooth profile.
        let e1 = |k: usize| 2.0 * levels[k].1 - levels[k - 1].1;
        let e2 = |k: usize| (4.0 * e1(k) - e1(k - 1)) / 3.0;
        let last = levels.len() - 1;
        let estimate = e2(last).clamp(0.0, center);
        let converged = (e2(last) - e2(last - 1)).abs() < 1e-7;
        Ok(EnvelopeProfile {
            levels,
            estimate,
            converged,
        })
    }

    /// Minimizer of `‖w − anchor‖` over the linearization of `F⁻¹(y)` at `z`.
    fn linearized_projection(&self, anchor: &[f64], z: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        let f = self.func();
        let fz = f.eval(z);
        let j = f.jacobian(z);
        let jz = mat_vec(&j, z);
        // Affine model: f(z) + J(w − z) = J w + c.
        let c = sub(&fz, &jz);
        match self {
            SetValuedMap::SingleSmooth { .. } => Some(affine_projection(anchor, &j, &sub(y, &c))),
            SetValuedMap::SmoothMinusConvex { set, .. } => match set {
                ConvexSet::Singleton { p } => {
                    let target: Vec<f64> = y.iter().zip(p).zip(&c).map(|((a, b), cc)| a + b - cc).collect();
                    Some(affine_projection(anchor, &j, &target))
                }
                ConvexSet::Ball { center, radius } => {
                    let q = sub(&sub(&fz, y), center);
                    let qn = norm2(&q);
                    if qn == 0.0 {
                        return Some(anchor.to_vec());
                    }
                    let nvec: Vec<f64> = q.iter().map(|v| v / qn).collect();
                    // nᵀ(J w + c − y − center) ≤ r
                    let row = crate::linalg::mat_t_vec(&j, &nvec);
                    let shift: f64 = nvec
                        .iter()
                        .zip(c.iter().zip(y.iter().zip(center)))
                        .map(|(ni, (ci, (yi, ce)))| ni * (ci - yi - ce))
                        .sum();
                    polyhedral_projection(anchor, vec![row], vec![radius - shift])
                }
                _ => {
                    let (rows, rhs) = set.halfspaces()?;
                    // R(J w + c − y) ≤ s
                    let shift = sub(&c, y);
                    let a: Vec<Vec<f64>> = rows.iter().map(|r| crate::linalg::mat_t_vec(&j, r)).collect();
                    let b: Vec<f64> = rows
                        .iter()
                        .zip(&rhs)
                        .map(|(r, s)| s - crate::linalg::dot(r, &shift))
                        .collect();
                    polyhedral_projection(anchor, a, b)
                }
            },
        }
    }

    /// Newton-type restoration onto `F⁻¹(y)` anchored at `anchor`, started from `start`.
    ///
    /// Each step moves toward the point of the linearized preimage nearest the
    /// anchor, halving the step while the residual grows. Iteration stops when
    /// steps stall (`< 1e−13`), not when the residual first meets tolerance, so
    /// slowly converging degenerate cases still reach the nearest point.
    pub fn restore(&self, anchor: &[f64], start: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        let mut z = start.to_vec();
        let mut r = self.image_distance_raw(&z, y);
        let floor = 1e-12 * (1.0 + norm2(y));
        for _ in 0..RESTORE_ITERS {
            let Some(w) = self.linearized_projection(anchor, &z, y) else {
                break;
            };
            let step = sub(&w, &z);
            let mut t = 1.0;
            let mut next = None;
            for _ in 0..40 {
                let cand: Vec<f64> = z.iter().zip(&step).map(|(a, b)| a + t * b).collect();
                let rc = self.image_distance_raw(&cand, y);
                if rc.is_finite() && (rc <= r || rc <= floor) {
                    next = Some((cand, rc));
                    break;
                }
                t *= 0.5;
            }
            let Some((zn, rn)) = next else {
                break;
            };
            let moved = dist2(&zn, &z);
            z = zn;
            r = rn;
            if moved <= 1e-13 * (1.0 + norm2(&z)) {
                break;
            }
        }
        (r <= membership_tol(y) && self.in_domain(&z)).then_some(z)
    }

    /// `d(x, F⁻¹(y) ∩ region)`, estimated from above.
    ///
    /// Restoration runs from `x` and from the `region.candidates` grid nodes with
    /// the smallest `‖x − z‖ + 100·d(y, F(z))`. The result is the distance to the
    /// nearest restored preimage point, so it never underestimates the
    /// distance to the preimage points it finds.
    pub fn inverse_distance(&self, x: &[f64], y: &[f64], region: &SearchRegion) -> Result<InverseDistance> {
        check_dim(self.x_dim(), x.len())?;
        check_dim(self.y_dim(), y.len())?;
        check_dim(self.x_dim(), region.dim())?;
        let spec = region.spec();
        spec.validate()?;
        let score = |z: &[f64]| dist2(x, z) + 100.0 * self.image_distance_raw(z, y);
        let values = evaluate_grid(&score, &spec);
        let mut starts = vec![x.to_vec()];
        starts.extend(
            k_best(&values, 0..values.len(), region.candidates)
                .into_iter()
                .map(|i| spec.node(i)),
        );
        let tol = 1e-9 * (1.0 + crate::linalg::norm_inf(&region.lo).max(crate::linalg::norm_inf(&region.hi)));
        let mut best: Option<InverseDistance> = None;
        for s in &starts {
            if let Some(z) = self.restore(x, s, y) {
                if !region.contains(&z, tol) {
                    continue;
                }
                let d = dist2(x, &z);
                if best.as_ref().is_none_or(|b| d < b.distance) {
                    best = Some(InverseDistance {
                        distance: d,
                        witness: z,
                    });
                }
            }
        }
        best.ok_or(Error::EmptyInverse)
    }
}

fn affine_projection(anchor: &[f64], j: &DMatrix<f64>, target: &[f64]) -> Vec<f64> {
    // w = anchor + J⁺(target − J·anchor)
    let resid = sub(target, &mat_vec(j, anchor));
    add(anchor, &pinv_solve(j, &resid, 1e-12))
}

fn polyhedral_projection(anchor: &[f64], a: Vec<Vec<f64>>, b: Vec<f64>) -> Option<Vec<f64>> {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (r, s) in a.into_iter().zip(b) {
        if norm2(&r) <= 1e-14 {
            if s < -1e-12 {
                return None;
            }
            continue;
        }
        rows.push(r);
        rhs.push(s);
    }
    if rows.is_empty() {
        return Some(anchor.to_vec());
    }
    project_polyhedron(anchor, &rows, &rhs).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn cubic() -> SetValuedMap {
        SetValuedMap::single_smooth(SmoothFn::CubicDifference, None).unwrap()
    }

    fn square() -> SetValuedMap {
        SetValuedMap::single_smooth(SmoothFn::Square, None).unwrap()
    }

    /// Closed form `|x₁ − x₂ − ∛y| / √2`.
    fn cubic_inverse(x: &[f64], y: f64) -> f64 {
        (x[0] - x[1] - y.cbrt()).abs() / 2f64.sqrt()
    }

    #[test]
    fn image_distance_examples() {
        assert_eq!(square().image_distance(&[1.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(cubic().image_distance(&[0.0, 0.0], &[1.0]).unwrap(), 1.0);
        let f =
            SetValuedMap::smooth_minus_convex(SmoothFn::Identity { dim: 1 }, ConvexSet::nonpositive_orthant(1), None)
                .unwrap();
        assert_eq!(f.image_distance(&[0.0], &[-2.0]).unwrap(), 2.0);
    }

    #[test]
    fn domain_enforced() {
        let f = SetValuedMap::single_smooth(
            SmoothFn::Square,
            Some(BoxDomain {
                lo: vec![0.0],
                hi: vec![1.0],
            }),
        )
        .unwrap();
        assert!(f.image_distance(&[2.0], &[0.0]).is_err());
    }

    #[test]
    fn inverse_distance_examples() {
        let region = SearchRegion::cube(2, 2.0, 16);
        let d = cubic().inverse_distance(&[0.0, 0.0], &[1.0], &region).unwrap();
        assert_abs_diff_eq!(d.distance, 1.0 / 2f64.sqrt(), epsilon = 1e-10);
        let d = cubic().inverse_distance(&[0.3, 0.1], &[0.008], &region).unwrap();
        assert_abs_diff_eq!(d.distance, 0.0, epsilon = 1e-12);
        let id = SetValuedMap::single_smooth(SmoothFn::Identity { dim: 1 }, None).unwrap();
        let d = id
            .inverse_distance(&[0.0], &[3.0], &SearchRegion::cube(1, 4.0, 16))
            .unwrap();
        assert_abs_diff_eq!(d.distance, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cubic_inverse_matches_closed_form_on_diagonal_targets() {
        let region = SearchRegion::cube(2, 2.0, 16);
        for (x, y) in [([0.1, 0.1], 0.0), ([0.2, -0.1], 0.0), ([0.05, 0.3], -0.001)] {
            let d = cubic().inverse_distance(&x, &[y], &region).unwrap();
            assert_abs_diff_eq!(d.distance, cubic_inverse(&x, y), epsilon = 1e-10);
        }
    }

    #[test]
    fn square_negative_target_has_empty_inverse() {
        let r = square().inverse_distance(&[0.1], &[-0.5], &SearchRegion::cube(1, 2.0, 16));
        assert_eq!(r, Err(Error::EmptyInverse));
    }

    #[test]
    fn square_picks_nearer_branch() {
        let d = square()
            .inverse_distance(&[-0.9], &[1.0], &SearchRegion::cube(1, 2.0, 16))
            .unwrap();
        assert_abs_diff_eq!(d.distance, 0.1, epsilon = 1e-10);
        assert_abs_diff_eq!(d.witness[0], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn smooth_minus_box_inverse() {
        // F(x) = x − (−∞,0]: F⁻¹(y) = {x ≤ y}.
        let f =
            SetValuedMap::smooth_minus_convex(SmoothFn::Identity { dim: 1 }, ConvexSet::nonpositive_orthant(1), None)
                .unwrap();
        let d = f
            .inverse_distance(&[1.5], &[0.5], &SearchRegion::cube(1, 3.0, 16))
            .unwrap();
        assert_abs_diff_eq!(d.distance, 1.0, epsilon = 1e-10);
        let d = f
            .inverse_distance(&[-1.0], &[0.5], &SearchRegion::cube(1, 3.0, 16))
            .unwrap();
        assert_eq!(d.distance, 0.0);
    }

    #[test]
    fn singleton_and_ball_inverse() {
        let lin = SmoothFn::Linear {
            matrix: vec![vec![2.0, 0.0], vec![0.0, 0.5]],
        };
        let f = SetValuedMap::smooth_minus_convex(lin.clone(), ConvexSet::singleton(vec![0.0, 0.0]).unwrap(), None)
            .unwrap();
        let d = f
            .inverse_distance(&[0.0, 0.0], &[1.0, 1.0], &SearchRegion::cube(2, 4.0, 8))
            .unwrap();
        assert_abs_diff_eq!(d.distance, (0.25f64 + 4.0).sqrt(), epsilon = 1e-9);
        let f = SetValuedMap::smooth_minus_convex(
            SmoothFn::Identity { dim: 2 },
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            None,
        )
        .unwrap();
        // x − y ∈ B(0,1) ⟺ x ∈ B(y,1).
        let d = f
            .inverse_distance(&[3.0, 0.0], &[0.0, 0.0], &SearchRegion::cube(2, 4.0, 8))
            .unwrap();
        assert_abs_diff_eq!(d.distance, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn envelope_examples() {
        let p = cubic().envelope_profile(&[1.0, 0.0], &[0.0]).unwrap();
        assert_abs_diff_eq!(p.estimate, 1.0, epsilon = 1e-6);
        assert!(p.converged);
        assert_eq!(square().envelope_phi(&[0.0], &[0.0]).unwrap(), 0.0);
        let p = square().envelope_profile(&[0.7], &[2.0]).unwrap();
        assert_abs_diff_eq!(p.estimate, (2.0f64 - 0.49).abs(), epsilon = 1e-6);
    }

    #[test]
    fn perturbed_map_adds_smooth_part() {
        let f = SetValuedMap::single_smooth(SmoothFn::Identity { dim: 1 }, None).unwrap();
        let g = f.perturbed(&SmoothFn::ScaledSin { scale: 0.5, dim: 1 }).unwrap();
        assert_abs_diff_eq!(
            g.image_distance(&[1.0], &[0.0]).unwrap(),
            1.0 + 0.5 * 1f64.sin(),
            epsilon = 1e-15
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn on_graph_pairs_have_zero_image_distance(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let y = cubic().graph_point(&x, &[0.0]).unwrap();
            prop_assert!(cubic().image_distance(&x, &y).unwrap() <= 1e-9);
            let k = ConvexSet::boxed(vec![-1.0, 0.0], vec![1.0, f64::INFINITY]).unwrap();
            let f = SetValuedMap::smooth_minus_convex(SmoothFn::Identity { dim: 2 }, k.clone(), None).unwrap();
            let arb = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let y = sub(&x, &k.project(&arb).unwrap());
            prop_assert!(f.image_distance(&x, &y).unwrap() <= 1e-9);
        }

        #[test]
        fn envelope_below_image_distance(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y = vec![rng.random_range(-1.0..1.0)];
            let phi = cubic().envelope_phi(&x, &y).unwrap();
            let prof = cubic().envelope_profile(&x, &y).unwrap();
            let d = cubic().image_distance(&x, &y).unwrap();
            prop_assert!(phi <= d + 1e-9);
            prop_assert!(prof.estimate <= d + 1e-9);
            prop_assert!(prof.levels.iter().all(|(_, m)| *m <= d + 1e-9));
        }

        #[test]
        fn inverse_distance_bounded_by_explicit_preimages(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let y = rng.random_range(-0.4..0.4f64);
            let region = SearchRegion::cube(2, 2.0, 16);
            let d = cubic().inverse_distance(&x, &[y], &region).unwrap();
            prop_assert!((d.distance - cubic_inverse(&x, y)).abs() <= 1e-5);
            for _ in 0..5 {
                let a = rng.random_range(-1.0..1.0);
                let z = vec![a + y.cbrt(), a];
                prop_assert!(d.distance <= dist2(&x, &z) + 1e-9);
            }
        }

        #[test]
        fn on_graph_inverse_is_zero(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = vec![rng.random_range(-1.5..1.5)];
            let y = square().graph_point(&x, &[0.0]).unwrap();
            let d = square().inverse_distance(&x, &y, &SearchRegion::cube(1, 2.0, 16)).unwrap();
            prop_assert!(d.distance <= SearchRegion::cube(1, 2.0, 16).cell_diameter());
            prop_assert!(d.distance <= 1e-12);
        }
    }
}
