//! Directional Hölder metric regularity: sampled moduli, slope criteria,
//! coderivative slopes and perturbation experiments.

mod coderivative;
mod criterion;
mod perturbation;

pub use coderivative::{coderivative_slope, perturbation_condition, PerturbationCondition};
pub use criterion::{
    gamma1_equivalence_check, local_criterion, nonlocal_criterion, CriterionPoint, CriterionReport, EquivalenceReport,
    POSITIVE_THRESHOLD,
};
pub use perturbation::{
    hadamard_derivative, lipschitz_estimate, perturbation_experiment, HadamardEstimate, HadamardSchedule,
    LipschitzEstimate, PerturbationReport,
};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{in_directional_cone, pair_norm, DirectionSpec, ProductPoint};
use crate::linalg::{random_unit, sub};
use crate::maps::{SearchRegion, SetValuedMap};
use crate::serde_ext::{opt_reals, real, reals};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of sampling shells `‖(x,y) − (x̄,ȳ)‖ ∈ [δ2⁻ᵏ⁻¹, δ2⁻ᵏ]`.
pub const SHELLS: usize = 7;

fn default_samples() -> usize {
    2000
}
fn default_ratio_cap() -> f64 {
    100.0
}
fn default_criterion_points() -> usize {
    16
}

/// A directional regularity question at a graph point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityQuery {
    pub map: SetValuedMap,
    #[serde(with = "reals")]
    pub base_x: Vec<f64>,
    #[serde(with = "reals")]
    pub base_y: Vec<f64>,
    pub direction: DirectionSpec,
    pub gamma: f64,
    pub delta: f64,
    /// Gauge constant; `+∞` disables the gauge filter.
    #[serde(with = "real")]
    pub eta: f64,
    pub region: SearchRegion,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Ratios above this count toward a violation verdict.
    #[serde(default = "default_ratio_cap")]
    pub ratio_cap: f64,
    /// Directional sequences generated by the slope criteria.
    #[serde(default = "default_criterion_points")]
    pub criterion_points: usize,
}

impl RegularityQuery {
    /// Query in the zero direction with default sample counts.
    pub fn new(
        map: SetValuedMap,
        base_x: Vec<f64>,
        base_y: Vec<f64>,
        gamma: f64,
        delta: f64,
        eta: f64,
        region: SearchRegion,
    ) -> Result<Self> {
        let direction = DirectionSpec::zero(map.x_dim(), map.y_dim(), 0.5)?;
        let q = RegularityQuery {
            map,
            base_x,
            base_y,
            direction,
            gamma,
            delta,
            eta,
            region,
            samples: default_samples(),
            seed: 0,
            ratio_cap: default_ratio_cap(),
            criterion_points: default_criterion_points(),
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_direction(mut self, direction: DirectionSpec) -> Result<Self> {
        self.direction = direction;
        self.validate()?;
        Ok(self)
    }

    pub fn with_samples(mut self, samples: usize, seed: u64) -> Self {
        self.samples = samples;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        check_dim(self.map.x_dim(), self.base_x.len())?;
        check_dim(self.map.y_dim(), self.base_y.len())?;
        self.direction.validate()?;
        check_dim(self.map.x_dim(), self.direction.dir.x.dim())?;
        check_dim(self.map.y_dim(), self.direction.dir.y.dim())?;
        check_dim(self.map.x_dim(), self.region.dim())?;
        self.region.validate()?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidInput("γ must lie in (0, 1]".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidInput("δ must be positive and finite".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidInput("η must be positive".into()));
        }
        if !(self.ratio_cap > 0.0) {
            return Err(Error::InvalidInput("ratio cap must be positive".into()));
        }
        let d = self.map.image_distance(&self.base_x, &self.base_y)?;
        if d > 1e-7 {
            return Err(Error::NotInSet { distance: d });
        }
        Ok(())
    }

    fn offset_norm(&self, x: &[f64], y: &[f64]) -> f64 {
        pair_norm(&sub(x, &self.base_x), &sub(y, &self.base_y))
    }
}

/// Why a sampled pair was kept or dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleClass {
    Admissible,
    OutsideBall,
    OutsideDomain,
    OutsideCone,
    GaugeFails,
}

/// Classifies `(x, y)` against the ball, the map's domain, the directional cone and the gauge.
pub fn classify(q: &RegularityQuery, x: &[f64], y: &[f64]) -> Result<SampleClass> {
    check_dim(q.map.x_dim(), x.len())?;
    check_dim(q.map.y_dim(), y.len())?;
    let rho = q.offset_norm(x, y);
    if rho > q.delta {
        return Ok(SampleClass::OutsideBall);
    }
    if !q.map.in_domain(x) {
        return Ok(SampleClass::OutsideDomain);
    }
    let w = ProductPoint::from_vecs(sub(x, &q.base_x), sub(y, &q.base_y));
    if !in_directional_cone(&w, &q.direction)? {
        return Ok(SampleClass::OutsideCone);
    }
    let d = q.map.image_distance_raw(x, y);
    let admissible = if q.eta.is_infinite() {
        true
    } else if rho == 0.0 {
        d == 0.0
    } else {
        d <= q.eta * rho.powf(1.0 / q.gamma)
    };
    Ok(if admissible {
        SampleClass::Admissible
    } else {
        SampleClass::GaugeFails
    })
}

/// Ball, cone and gauge conditions together (non-strict gauge inequality).
pub fn gauge_admissible(q: &RegularityQuery, x: &[f64], y: &[f64]) -> Result<bool> {
    Ok(classify(q, x, y)? == SampleClass::Admissible)
}

/// Shell index `⌊log₂(δ/ρ)⌋` clamped to `0..SHELLS`.
pub fn shell_of(rho: f64, delta: f64) -> usize {
    if rho <= 0.0 {
        return SHELLS - 1;
    }
    ((delta / rho).log2().floor().max(0.0) as usize).min(SHELLS - 1)
}

/// Random unit offset (product norm) inside `cone B((u,v), ε)`.
fn cone_offset<R: Rng>(rng: &mut R, q: &RegularityQuery) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (q.base_x.len(), q.base_y.len());
    let dir = &q.direction;
    let uv: Vec<f64> = dir.dir.x.coords.iter().chain(&dir.dir.y.coords).copied().collect();
    let a = dir.dir.norm();
    loop {
        let g = random_unit(rng, nx + ny);
        let p: Vec<f64> = if a <= dir.epsilon {
            g
        } else {
            // b = g/‖g‖ has product norm 1, so (u,v) + r·b lies in B((u,v), ε).
            let gn = pair_norm(&g[..nx], &g[nx..]);
            let r = 0.999 * dir.epsilon * rng.random::<f64>().powf(1.0 / (nx + ny) as f64) / gn;
            uv.iter().zip(&g).map(|(u, b)| u + r * b).collect()
        };
        let n = pair_norm(&p[..nx], &p[nx..]);
        if n > 1e-12 {
            return (
                p[..nx].iter().map(|v| v / n).collect(),
                p[nx..].iter().map(|v| v / n).collect(),
            );
        }
    }
}

/// A sampled pair `(x, y)` before evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Stratified candidates: `q.samples` pairs spread evenly over the shells.
///
/// Even-indexed pairs are uniform in the cone at a uniform radius in the shell;
/// odd-indexed pairs keep the x-part and move `y` to the nearest point of
/// `F(x)` plus an offset of relative size `10⁻⁶ᵘ`, `u` uniform in `[0, 1]`.
pub fn sample_pairs(q: &RegularityQuery) -> Result<Vec<CandidatePair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed);
    let ny = q.base_y.len();
    let mut out = Vec::with_capacity(q.samples);
    for k in 0..SHELLS {
        let count = q.samples / SHELLS + usize::from(k < q.samples % SHELLS);
        let outer = q.delta * 0.5f64.powi(k as i32);
        for i in 0..count {
            let rho = 0.5 * outer * (1.0 + rng.random::<f64>());
            let (wx, wy) = cone_offset(&mut rng, q);
            let x: Vec<f64> = q.base_x.iter().zip(&wx).map(|(b, w)| b + rho * w).collect();
            let mut y: Vec<f64> = q.base_y.iter().zip(&wy).map(|(b, w)| b + rho * w).collect();
            if i % 2 == 1 {
                let e = random_unit(&mut rng, ny);
                let size = rho * 10f64.powf(-6.0 * rng.random::<f64>());
                let gp = q.map.graph_point(&x, &y)?;
                y = gp.iter().zip(&e).map(|(g, d)| g + size * d).collect();
            }
            out.push(CandidatePair { x, y });
        }
    }
    Ok(out)
}

/// Outcome of one sampled pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub shell: usize,
    #[serde(with = "reals")]
    pub x: Vec<f64>,
    #[serde(with = "reals")]
    pub y: Vec<f64>,
    #[serde(with = "real")]
    pub offset_norm: f64,
    pub class: SampleClass,
    #[serde(with = "real")]
    pub image_distance: f64,
    /// `d(x, F⁻¹(y))`; `+∞` for an empty preimage, absent when not evaluated.
    #[serde(with = "crate::serde_ext::real_opt")]
    pub inverse_distance: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstSample {
    #[serde(with = "reals")]
    pub x: Vec<f64>,
    #[serde(with = "reals")]
    pub y: Vec<f64>,
    #[serde(with = "real")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Regular {
        #[serde(with = "real")]
        tau: f64,
    },
    ViolationFound,
    Inconclusive,
}

/// Sampled answer to a [`RegularityQuery`].
///
/// Counts: `total = admissible_count + rejected_by_ball + rejected_by_domain +
/// rejected_by_cone + rejected_by_gauge` and `admissible_count = evaluated +
/// on_graph + empty_inverse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    /// Largest finite ratio `d(x, F⁻¹y)/d(y, F(x))^γ`.
    #[serde(with = "real")]
    pub tau_estimate: f64,
    pub worst_sample: Option<WorstSample>,
    pub total: usize,
    pub admissible_count: usize,
    pub evaluated: usize,
    pub on_graph: usize,
    pub empty_inverse: usize,
    pub rejected_by_ball: usize,
    pub rejected_by_domain: usize,
    pub rejected_by_cone: usize,
    pub rejected_by_gauge: usize,
    /// Largest finite ratio per shell, outermost first.
    #[serde(with = "opt_reals")]
    pub shell_max: Vec<Option<f64>>,
    /// Largest ratio when empty preimages count as `d(x, ∅) = +∞`.
    #[serde(with = "real")]
    pub max_ratio_empty_as_infinite: f64,
    pub verdict: Verdict,
    #[serde(skip)]
    pub samples: Vec<SampleRecord>,
}

impl ModulusReport {
    pub fn tau(&self) -> Option<f64> {
        match self.verdict {
            Verdict::Regular { tau } => Some(tau),
            _ => None,
        }
    }
}

/// Samples pairs with [`sample_pairs`] and evaluates them with [`estimate_modulus_on`].
pub fn estimate_modulus(q: &RegularityQuery) -> Result<ModulusReport> {
    q.validate()?;
    let pairs = sample_pairs(q)?;
    estimate_modulus_on(q, &pairs)
}

/// Evaluates the regularity ratio on the given candidate pairs.
///
/// Pairs with `d(y, F(x)) ≤ 10⁻¹⁴` count as on the graph; empty preimages are
/// counted separately and excluded from `tau_estimate`. The verdict is
/// `ViolationFound` when some ratio exceeds the cap and the shell maxima grow
/// monotonically by at least 2× over three consecutive refinements,
/// `Inconclusive` when no ratio was evaluated, and `Regular(tau)` otherwise.
pub fn estimate_modulus_on(q: &RegularityQuery, pairs: &[CandidatePair]) -> Result<ModulusReport> {
    q.validate()?;
    let records: Vec<SampleRecord> = pairs
        .par_iter()
        .enumerate()
        .map(|(index, p)| evaluate_pair(q, index, p))
        .collect::<Result<_>>()?;

    let mut rep = ModulusReport {
        tau_estimate: 0.0,
        worst_sample: None,
        total: records.len(),
        admissible_count: 0,
        evaluated: 0,
        on_graph: 0,
        empty_inverse: 0,
        rejected_by_ball: 0,
        rejected_by_domain: 0,
        rejected_by_cone: 0,
        rejected_by_gauge: 0,
        shell_max: vec![None; SHELLS],
        max_ratio_empty_as_infinite: 0.0,
        verdict: Verdict::Inconclusive,
        samples: Vec::new(),
    };
    for r in &records {
        match r.class {
            SampleClass::OutsideBall => rep.rejected_by_ball += 1,
            SampleClass::OutsideDomain => rep.rejected_by_domain += 1,
            SampleClass::OutsideCone => rep.rejected_by_cone += 1,
            SampleClass::GaugeFails => rep.rejected_by_gauge += 1,
            SampleClass::Admissible => {
                rep.admissible_count += 1;
                match r.ratio {
                    None => rep.on_graph += 1,
                    Some(v) if v.is_infinite() => {
                        rep.empty_inverse += 1;
                        rep.max_ratio_empty_as_infinite = f64::INFINITY;
                    }
                    Some(v) => {
                        rep.evaluated += 1;
                        rep.max_ratio_empty_as_infinite = rep.max_ratio_empty_as_infinite.max(v);
                        let m = &mut rep.shell_max[r.shell];
                        *m = Some(m.map_or(v, |c| c.max(v)));
                        if rep.worst_sample.as_ref().is_none_or(|w| v > w.ratio) {
                            rep.worst_sample = Some(WorstSample {
                                x: r.x.clone(),
                                y: r.y.clone(),
                                ratio: v,
                            });
                        }
                    }
                }
            }
        }
    }
    rep.tau_estimate = rep.worst_sample.as_ref().map_or(0.0, |w| w.ratio);
    rep.verdict = if rep.evaluated == 0 {
        Verdict::Inconclusive
    } else if rep.tau_estimate > q.ratio_cap && growing_run(&rep.shell_max) {
        Verdict::ViolationFound
    } else {
        Verdict::Regular { tau: rep.tau_estimate }
    };
    rep.samples = records;
    Ok(rep)
}

/// Four consecutive shells with nondecreasing maxima whose last is at least twice the first.
fn growing_run(m: &[Option<f64>]) -> bool {
    m.windows(4).any(|w| {
        let v: Option<Vec<f64>> = w.iter().copied().collect();
        v.is_some_and(|v| v.windows(2).all(|p| p[1] >= p[0]) && v[3] >= 2.0 * v[0])
    })
}

fn evaluate_pair(q: &RegularityQuery, index: usize, p: &CandidatePair) -> Result<SampleRecord> {
    let class = classify(q, &p.x, &p.y)?;
    let rho = q.offset_norm(&p.x, &p.y);
    let mut rec = SampleRecord {
        index,
        shell: shell_of(rho, q.delta),
        x: p.x.clone(),
        y: p.y.clone(),
        offset_norm: rho,
        class,
        image_distance: if q.map.in_domain(&p.x) {
            q.map.image_distance_raw(&p.x, &p.y)
        } else {
            f64::INFINITY
        },
        inverse_distance: None,
        ratio: None,
    };
    if class != SampleClass::Admissible || rec.image_distance <= 1e-14 {
        return Ok(rec);
    }
    match q.map.inverse_distance(&p.x, &p.y, &q.region) {
        Ok(inv) => {
            rec.inverse_distance = Some(inv.distance);
            rec.ratio = Some(inv.distance / rec.image_distance.powf(q.gamma));
        }
        Err(Error::EmptyInverse) => {
            rec.inverse_distance = Some(f64::INFINITY);
            rec.ratio = Some(f64::INFINITY);
        }
        Err(e) => return Err(e),
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexSet;
    use crate::maps::SmoothFn;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn cubic_query(samples: usize) -> RegularityQuery {
        let map = SetValuedMap::single_smooth(SmoothFn::CubicDifference, None).unwrap();
        RegularityQuery::new(
            map,
            vec![0.0, 0.0],
            vec![0.0],
            1.0 / 3.0,
            0.5,
            1e6,
            SearchRegion::cube(2, 2.0, 16),
        )
        .unwrap()
        .with_samples(samples, 7)
    }

    fn square_query(gamma: f64, delta: f64, eta: f64) -> RegularityQuery {
        let map = SetValuedMap::single_smooth(SmoothFn::Square, None).unwrap();
        RegularityQuery::new(
            map,
            vec![0.0],
            vec![0.0],
            gamma,
            delta,
            eta,
            SearchRegion::cube(1, 2.0, 32),
        )
        .unwrap()
    }

    #[test]
    fn gauge_examples() {
        let q = square_query(0.5, 1.0, 1e-3);
        assert!(gauge_admissible(&q, &[0.0], &[0.0]).unwrap());
        assert!(!gauge_admissible(&q, &[2.0], &[0.0]).unwrap());
        assert!(gauge_admissible(&q, &[0.1], &[0.01]).unwrap());
        assert_eq!(classify(&q, &[0.1], &[0.5]).unwrap(), SampleClass::GaugeFails);
    }

    #[test]
    fn base_point_must_be_on_graph() {
        let map = SetValuedMap::single_smooth(SmoothFn::Square, None).unwrap();
        let r = RegularityQuery::new(map, vec![1.0], vec![0.0], 1.0, 1.0, 1.0, SearchRegion::cube(1, 2.0, 16));
        assert!(matches!(r, Err(Error::NotInSet { .. })));
    }

    #[test]
    fn cubic_modulus_respects_closed_form_bound() {
        let rep = estimate_modulus(&cubic_query(1400)).unwrap();
        assert!(rep.tau_estimate <= 2f64.powf(1.0 / 6.0) + 1e-6, "{}", rep.tau_estimate);
        assert!(rep.tau_estimate > 1.0);
        assert!(matches!(rep.verdict, Verdict::Regular { .. }));
        assert_eq!(
            rep.total,
            rep.admissible_count
                + rep.rejected_by_ball
                + rep.rejected_by_domain
                + rep.rejected_by_cone
                + rep.rejected_by_gauge
        );
        assert_eq!(rep.admissible_count, rep.evaluated + rep.on_graph + rep.empty_inverse);
    }

    #[test]
    fn identity_modulus_is_one() {
        let map = SetValuedMap::single_smooth(SmoothFn::Identity { dim: 1 }, None).unwrap();
        let q = RegularityQuery::new(
            map,
            vec![0.0],
            vec![0.0],
            1.0,
            1.0,
            f64::INFINITY,
            SearchRegion::cube(1, 3.0, 16),
        )
        .unwrap()
        .with_samples(300, 1);
        let rep = estimate_modulus(&q).unwrap();
        assert_abs_diff_eq!(rep.tau_estimate, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn linear_modulus_matches_singular_value() {
        let map = SetValuedMap::single_smooth(
            SmoothFn::Linear {
                matrix: vec![vec![2.0, 0.0], vec![0.0, 0.5]],
            },
            None,
        )
        .unwrap();
        let q = RegularityQuery::new(
            map,
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            1.0,
            1.0,
            f64::INFINITY,
            SearchRegion::cube(2, 4.0, 16),
        )
        .unwrap()
        .with_samples(700, 3);
        let rep = estimate_modulus(&q).unwrap();
        // 1/σ_min(diag(2, 1/2)) = 2.
        assert!((rep.tau_estimate - 2.0).abs() <= 0.1, "{}", rep.tau_estimate);
        assert!(rep.tau_estimate <= 2.0 + 1e-9);
    }

    #[test]
    fn square_gamma_one_is_violation() {
        let q = square_query(1.0, 0.01, f64::INFINITY).with_samples(700, 5);
        let rep = estimate_modulus(&q).unwrap();
        assert_eq!(rep.verdict, Verdict::ViolationFound);
        assert!(rep.empty_inverse > 0);
    }

    #[test]
    fn gauge_filter_bounds_square_half_order() {
        let filtered = estimate_modulus(&square_query(0.5, 0.5, 0.5).with_samples(700, 5)).unwrap();
        assert!(filtered.tau_estimate <= 1.0 + 1e-9);
        assert_eq!(filtered.empty_inverse, 0);
        let unfiltered = estimate_modulus(&square_query(0.5, 0.5, f64::INFINITY).with_samples(700, 5)).unwrap();
        assert!(unfiltered.max_ratio_empty_as_infinite > 1e3);
    }

    #[test]
    fn directional_cone_rejects_samples() {
        let map = SetValuedMap::single_smooth(SmoothFn::Identity { dim: 1 }, None).unwrap();
        let dir = DirectionSpec::new(ProductPoint::from_vecs(vec![1.0], vec![0.0]), 0.2).unwrap();
        let q = RegularityQuery::new(
            map,
            vec![0.0],
            vec![0.0],
            1.0,
            1.0,
            f64::INFINITY,
            SearchRegion::cube(1, 3.0, 16),
        )
        .unwrap()
        .with_direction(dir)
        .unwrap()
        .with_samples(140, 2);
        let rep = estimate_modulus(&q).unwrap();
        // Graph-guided pairs leave the cone; cone-uniform pairs stay in it.
        assert!(rep.rejected_by_cone > 0);
        assert!(rep.admissible_count >= 70);
    }

    #[test]
    fn smooth_minus_convex_modulus() {
        // F(x) = x − (−∞, 0]: d(x, F⁻¹y) = (x − y)₊ = d(y, F(x)).
        let map =
            SetValuedMap::smooth_minus_convex(SmoothFn::Identity { dim: 1 }, ConvexSet::nonpositive_orthant(1), None)
                .unwrap();
        let q = RegularityQuery::new(
            map,
            vec![0.0],
            vec![0.0],
            1.0,
            1.0,
            f64::INFINITY,
            SearchRegion::cube(1, 3.0, 16),
        )
        .unwrap()
        .with_samples(140, 2);
        let rep = estimate_modulus(&q).unwrap();
        assert_abs_diff_eq!(rep.tau_estimate, 1.0, epsilon = 1e-6);
        assert!(rep.on_graph > 0);
    }

    #[test]
    fn shells() {
        assert_eq!(shell_of(0.5, 0.5), 0);
        assert_eq!(shell_of(0.2, 0.5), 1);
        assert_eq!(shell_of(1e-9, 0.5), SHELLS - 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn shrinking_delta_never_increases_tau(seed in 0u64..1000, shrink in 0.1f64..1.0) {
            let q = cubic_query(140).with_samples(140, seed);
            let pairs = sample_pairs(&q).unwrap();
            let big = estimate_modulus_on(&q, &pairs).unwrap();
            let mut small_q = q.clone();
            small_q.delta *= shrink;
            let small = estimate_modulus_on(&small_q, &pairs).unwrap();
            prop_assert!(small.tau_estimate <= big.tau_estimate + 1e-12);
        }
    }
}
