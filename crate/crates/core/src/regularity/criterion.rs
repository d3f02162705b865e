use super::{estimate_modulus, shell_of, ModulusReport, RegularityQuery, Verdict, SHELLS};
use crate::error::{Error, Result};
use crate::geometry::{directional_sequence, in_directional_cone, pair_norm, DirectionalSchedule, ProductPoint};
use crate::linalg::{norm2, random_unit, sub};
use crate::serde_ext::{real, real_opt, reals};
use crate::slopes::{holder_slope_of_phi, SlopeKind};
use crate::solvers::search::{pattern_search, SearchSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Liminf estimates above this count as positive.
pub const POSITIVE_THRESHOLD: f64 = 1e-3;

/// Shells whose points form the tail of the sequences.
const TAIL: [usize; 2] = [SHELLS - 2, SHELLS - 1];

/// Tail points refined by pattern search.
const REFINE_STARTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionPoint {
    pub shell: usize,
    #[serde(with = "reals")]
    pub x: Vec<f64>,
    #[serde(with = "reals")]
    pub y: Vec<f64>,
    #[serde(with = "real")]
    pub slope: f64,
    /// `φ(x, y)^γ / ‖(x, y) − (x̄, ȳ)‖`.
    #[serde(with = "real")]
    pub phi_ratio: f64,
    /// Produced by the tail refinement rather than by a sequence.
    pub refined: bool,
}

/// Slope criterion evaluated along directional sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub kind: SlopeKind,
    /// Minimum slope over tail points; absent when the tail is empty.
    #[serde(with = "real_opt")]
    pub liminf_estimate: Option<f64>,
    pub positive: bool,
    pub inconclusive: bool,
    pub tail_count: usize,
    pub points: Vec<CriterionPoint>,
}

/// Liminf of `|Γφ^γ(·, y)|(x)` along admissible directional sequences.
pub fn nonlocal_criterion(q: &RegularityQuery) -> Result<CriterionReport> {
    criterion(q, SlopeKind::Nonlocal)
}

/// Liminf of `|∇φ^γ(·, y)|(x)` along admissible directional sequences.
pub fn local_criterion(q: &RegularityQuery) -> Result<CriterionReport> {
    criterion(q, SlopeKind::Local)
}

/// `θ` for the constraint `φ^γ/‖·‖ ≤ θ` in a shell.
fn theta(shell: usize) -> f64 {
    0.5f64.powi(shell as i32)
}

struct Ctx<'a> {
    q: &'a RegularityQuery,
    kind: SlopeKind,
}

impl Ctx<'_> {
    /// Shell and `φ^γ/ρ` when `(x, y)` satisfies the ball, domain, cone and
    /// `0 < φ^γ ≤ θ·ρ` constraints.
    fn admissible(&self, x: &[f64], y: &[f64], max_shell: Option<usize>) -> Result<Option<(usize, f64)>> {
        let q = self.q;
        let dx = sub(x, &q.base_x);
        let dy = sub(y, &q.base_y);
        let rho = pair_norm(&dx, &dy);
        if rho == 0.0 || rho > q.delta || !q.map.in_domain(x) {
            return Ok(None);
        }
        if !in_directional_cone(&ProductPoint::from_vecs(dx, dy), &q.direction)? {
            return Ok(None);
        }
        let shell = shell_of(rho, q.delta);
        let phi = q.map.envelope_phi(x, y)?;
        let ratio = phi.powf(q.gamma) / rho;
        let bound = theta(max_shell.map_or(shell, |m| m.min(shell)));
        Ok((phi > 0.0 && ratio <= bound).then_some((shell, ratio)))
    }

    fn slope(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(holder_slope_of_phi(&self.q.map, y, x, self.q.gamma, self.kind, &self.q.region)?.value)
    }

    fn point(&self, x: Vec<f64>, y: Vec<f64>, refined: bool) -> Result<Option<CriterionPoint>> {
        let Some((shell, phi_ratio)) = self.admissible(&x, &y, None)? else {
            return Ok(None);
        };
        let slope = self.slope(&x, &y)?;
        Ok(Some(CriterionPoint {
            shell,
            x,
            y,
            slope,
            phi_ratio,
            refined,
        }))
    }
}

/// Pulled `(x, y)` followed by the raw sequence point.
type Candidate = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Candidate `(x, y)` pairs: directional sequences in `X × Y` whose `y` part is
/// pulled to the graph and offset so that `φ^γ ≈ u·θ·ρ`, `u ∈ [0.1, 0.9]`.
/// The raw sequence point is kept as a fallback when the pulled pair leaves
/// the cone.
fn candidates(q: &RegularityQuery) -> Result<Vec<Candidate>> {
    let base = ProductPoint::from_vecs(q.base_x.clone(), q.base_y.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed ^ 0x00c0_ffee);
    let mut out = Vec::new();
    for s in 0..q.criterion_points {
        let schedule = DirectionalSchedule::geometric(
            0.75 * q.delta,
            q.direction.epsilon,
            SHELLS,
            1.0,
            q.seed.wrapping_add(s as u64),
        );
        for w in directional_sequence(&base, &q.direction, &schedule)? {
            let (x, y_raw) = (w.x.coords, w.y.coords);
            let rho = pair_norm(&sub(&x, &q.base_x), &sub(&y_raw, &q.base_y));
            let target = (theta(shell_of(rho, q.delta)) * rho * (0.1 + 0.8 * rng.random::<f64>())).powf(1.0 / q.gamma);
            let e = random_unit(&mut rng, q.base_y.len());
            let gp = q.map.graph_point(&x, &y_raw)?;
            let y: Vec<f64> = gp.iter().zip(&e).map(|(g, d)| g + target * d).collect();
            out.push((x, y, y_raw, gp));
        }
    }
    Ok(out)
}

fn criterion(q: &RegularityQuery, kind: SlopeKind) -> Result<CriterionReport> {
    q.validate()?;
    let ctx = Ctx { q, kind };
    let cands = candidates(q)?;
    let evaluated: Vec<Option<CriterionPoint>> = cands
        .into_par_iter()
        .map(|(x, y, y_raw, _)| match ctx.point(x.clone(), y, false)? {
            Some(p) => Ok(Some(p)),
            None => ctx.point(x, y_raw, false),
        })
        .collect::<Result<_>>()?;
    let mut points: Vec<CriterionPoint> = evaluated.into_iter().flatten().collect();

    let mut tail: Vec<usize> = (0..points.len()).filter(|&i| TAIL.contains(&points[i].shell)).collect();
    tail.sort_by(|&a, &b| points[a].slope.total_cmp(&points[b].slope).then(a.cmp(&b)));
    tail.truncate(REFINE_STARTS);
    let refined: Vec<Option<CriterionPoint>> = tail
        .par_iter()
        .map(|&i| refine(&ctx, &points[i]))
        .collect::<Result<_>>()?;
    points.extend(refined.into_iter().flatten());

    let tail_slopes: Vec<f64> = points
        .iter()
        .filter(|p| TAIL.contains(&p.shell))
        .map(|p| p.slope)
        .collect();
    let liminf = tail_slopes.iter().copied().reduce(f64::min);
    Ok(CriterionReport {
        kind,
        liminf_estimate: liminf,
        positive: liminf.is_some_and(|v| v > POSITIVE_THRESHOLD),
        inconclusive: liminf.is_none(),
        tail_count: tail_slopes.len(),
        points,
    })
}

/// Pattern search on `(x, e) ↦ slope at (x, P(x) + e)` over admissible tail
/// points, where `P(x)` is the graph point of `F(x)` nearest the start's `y`.
fn refine(ctx: &Ctx<'_>, start: &CriterionPoint) -> Result<Option<CriterionPoint>> {
    let q = ctx.q;
    let nx = start.x.len();
    let y_ref = start.y.clone();
    let gp0 = q.map.graph_point(&start.x, &y_ref)?;
    let e0 = sub(&start.y, &gp0);
    let rho = pair_norm(&sub(&start.x, &q.base_x), &sub(&start.y, &q.base_y));
    let en = norm2(&e0).max(1e-300);
    let mut z0 = start.x.clone();
    z0.extend(&e0);
    let lo: Vec<f64> = z0
        .iter()
        .enumerate()
        .map(|(i, v)| if i < nx { v - 0.5 * rho } else { v - 2.0 * en })
        .collect();
    let hi: Vec<f64> = z0
        .iter()
        .enumerate()
        .map(|(i, v)| if i < nx { v + 0.5 * rho } else { v + 2.0 * en })
        .collect();
    let mut spec = SearchSpec::new(lo, hi, 2);
    spec.max_iter = 40;
    let split = |z: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let x = z[..nx].to_vec();
        let gp = q.map.graph_point(&x, &y_ref)?;
        let y = gp.iter().zip(&z[nx..]).map(|(g, e)| g + e).collect();
        Ok((x, y))
    };
    let objective = |z: &[f64]| -> f64 {
        let eval = || -> Result<f64> {
            let (x, y) = split(z)?;
            match ctx.admissible(&x, &y, Some(start.shell))? {
                Some((shell, _)) if TAIL.contains(&shell) => ctx.slope(&x, &y),
                _ => Ok(f64::INFINITY),
            }
        };
        eval().unwrap_or(f64::INFINITY)
    };
    let (z, v) = pattern_search(&objective, &z0, &spec);
    if !v.is_finite() || v >= start.slope {
        return Ok(None);
    }
    let (x, y) = split(&z)?;
    ctx.point(x, y, true)
}

/// Both sides of the `γ = 1` equivalence between the local slope criterion and metric regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub criterion: CriterionReport,
    pub modulus: ModulusReport,
    pub consistent: bool,
}

/// Runs [`local_criterion`] and [`estimate_modulus`] on a `γ = 1` query.
///
/// Consistent when the criterion is positive exactly when the modulus verdict
/// is `Regular`, and then `liminf ≥ 1/τ − 10⁻²`.
pub fn gamma1_equivalence_check(q: &RegularityQuery) -> Result<EquivalenceReport> {
    if q.gamma != 1.0 {
        return Err(Error::InvalidInput("the equivalence check needs γ = 1".into()));
    }
    let criterion = local_criterion(q)?;
    let modulus = estimate_modulus(q)?;
    let consistent = match (&modulus.verdict, criterion.positive) {
        (Verdict::Regular { tau }, true) => criterion.liminf_estimate.is_some_and(|l| l >= 1.0 / tau - 1e-2),
        (Verdict::Regular { .. }, false) => false,
        (Verdict::ViolationFound, positive) => !positive,
        (Verdict::Inconclusive, _) => false,
    };
    Ok(EquivalenceReport {
        criterion,
        modulus,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{SearchRegion, SetValuedMap, SmoothFn};
    use approx::assert_abs_diff_eq;

    fn query(f: SmoothFn, gamma: f64, delta: f64, region: f64) -> RegularityQuery {
        let map = SetValuedMap::single_smooth(f, None).unwrap();
        let (nx, ny) = (map.x_dim(), map.y_dim());
        RegularityQuery::new(
            map,
            vec![0.0; nx],
            vec![0.0; ny],
            gamma,
            delta,
            f64::INFINITY,
            SearchRegion::cube(nx, region, 16),
        )
        .unwrap()
        .with_samples(700, 11)
    }

    #[test]
    fn identity_criteria_positive() {
        let q = query(SmoothFn::Identity { dim: 1 }, 1.0, 1.0, 3.0);
        let local = local_criterion(&q).unwrap();
        assert!(local.positive);
        assert_abs_diff_eq!(local.liminf_estimate.unwrap(), 1.0, epsilon = 1e-3);
        let nonlocal = nonlocal_criterion(&q).unwrap();
        assert!(nonlocal.liminf_estimate.unwrap() >= 1.0 - 1e-3);
    }

    #[test]
    fn cubic_local_vanishes_nonlocal_positive() {
        let mut q = query(SmoothFn::CubicDifference, 1.0 / 3.0, 0.5, 2.0);
        q.eta = 1e6;
        let local = local_criterion(&q).unwrap();
        assert!(!local.positive, "{:?}", local.liminf_estimate);
        let nonlocal = nonlocal_criterion(&q).unwrap();
        assert!(nonlocal.positive);
        // |Γφ^{1/3}| ≥ φ^{1/3}/d(x, F⁻¹y) ≥ 2^{−1/6}.
        assert!(nonlocal.liminf_estimate.unwrap() >= 2f64.powf(-1.0 / 6.0) - 1e-3);
    }

    #[test]
    fn square_gamma_one_not_positive() {
        let q = query(SmoothFn::Square, 1.0, 0.01, 2.0);
        assert!(!nonlocal_criterion(&q).unwrap().positive);
        let eq = gamma1_equivalence_check(&q).unwrap();
        assert!(!eq.criterion.positive);
        assert_eq!(eq.modulus.verdict, Verdict::ViolationFound);
        assert!(eq.consistent);
    }

    #[test]
    fn linear_equivalence() {
        let q = query(
            SmoothFn::Linear {
                matrix: vec![vec![2.0, 0.0], vec![0.0, 0.5]],
            },
            1.0,
            1.0,
            4.0,
        );
        let eq = gamma1_equivalence_check(&q).unwrap();
        assert!(eq.consistent);
        let l = eq.criterion.liminf_estimate.unwrap();
        assert!((l - 0.5).abs() <= 0.025, "{l}");
        assert!(l >= 0.5 - 1e-2);
    }

    #[test]
    fn equivalence_needs_gamma_one() {
        let q = query(SmoothFn::Square, 0.5, 0.5, 2.0);
        assert!(gamma1_equivalence_check(&q).is_err());
    }
}
