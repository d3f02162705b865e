use super::{product_norm, Point, ProductPoint};
use crate::error::{Error, Result};
use crate::linalg::random_unit;
use crate::serde_ext::reals;
use crate::solvers::scalar::minimize_scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A direction `(u, v)` and aperture `ε`; the associated cone is `cone B((u,v), ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSpec {
    pub dir: ProductPoint,
    pub epsilon: f64,
}

impl DirectionSpec {
    pub fn new(dir: ProductPoint, epsilon: f64) -> Result<Self> {
        let d = DirectionSpec { dir, epsilon };
        d.validate()?;
        Ok(d)
    }

    /// The zero direction, whose cone is the whole space.
    pub fn zero(nx: usize, ny: usize, epsilon: f64) -> Result<Self> {
        Self::new(ProductPoint::from_vecs(vec![0.0; nx], vec![0.0; ny]), epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidInput(
                "direction aperture ε must be positive and finite".into(),
            ));
        }
        if self
            .dir
            .x
            .coords
            .iter()
            .chain(&self.dir.y.coords)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("direction must be finite".into()));
        }
        Ok(())
    }
}

/// Relative slack accepted when deciding cone membership.
const CONE_TOL: f64 = 1e-12;

/// Whether `w ∈ cone B((u,v), ε)`, i.e. `w = 0` or `‖w/λ − (u,v)‖ ≤ ε` for some `λ > 0`.
///
/// Decided by minimizing the convex gap `φ(λ) = ‖w − λ(u,v)‖ − λε` on a
/// logarithmic grid followed by golden-section refinement.
pub fn in_directional_cone(w: &ProductPoint, d: &DirectionSpec) -> Result<bool> {
    w.check_dims(&d.dir)?;
    let wn = product_norm(w);
    if wn == 0.0 {
        return Ok(true);
    }
    let un = product_norm(&d.dir);
    let eps = d.epsilon;
    if un < eps {
        // The ball contains the origin, so its conic hull is the whole space.
        return Ok(true);
    }
    let gap = |lam: f64| product_norm(&w.sub(&d.dir.scale(lam))) - lam * eps;

    let lo = wn / (un + eps + 1.0) * 1e-3;
    let hi = wn * 1e3 / (un - eps).max(1e-6);
    const N: usize = 200;
    let ratio = (hi / lo).ln() / (N - 1) as f64;
    let grid: Vec<f64> = (0..N).map(|i| lo * (ratio * i as f64).exp()).collect();
    let vals: Vec<f64> = grid.iter().map(|&l| gap(l)).collect();
    let k = (0..N)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
        .unwrap();
    let tol = CONE_TOL * wn;
    if vals[k] <= tol {
        return Ok(true);
    }
    let a = grid[k.saturating_sub(1)];
    let b = grid[(k + 1).min(N - 1)];
    let (_, best) = minimize_scalar(gap, a, b, 1e-14 * b);
    Ok(best.min(vals[k]) <= tol)
}

fn default_jitter() -> f64 {
    0.0
}

/// Step sizes `tₙ ↓ 0` and apertures `δₙ` for [`directional_sequence`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalSchedule {
    #[serde(with = "reals")]
    pub steps: Vec<f64>,
    #[serde(with = "reals")]
    pub deltas: Vec<f64>,
    /// Fraction in `[0, 1]` of the admissible jitter radius actually used.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DirectionalSchedule {
    /// `tₙ = t₀·2⁻ⁿ`, `δₙ = δ₀·2⁻ⁿ` for `n = 0..len`.
    pub fn geometric(t0: f64, delta0: f64, len: usize, jitter: f64, seed: u64) -> Self {
        DirectionalSchedule {
            steps: (0..len).map(|n| t0 * 0.5f64.powi(n as i32)).collect(),
            deltas: (0..len).map(|n| delta0 * 0.5f64.powi(n as i32)).collect(),
            jitter,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidInput("empty schedule".into()));
        }
        if self.steps.len() < 3 {
            return Err(Error::InvalidInput("schedule needs at least 3 steps".into()));
        }
        if self.deltas.len() != self.steps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.steps.len(),
                got: self.deltas.len(),
            });
        }
        if self.steps.iter().any(|&t| !(t > 0.0 && t.is_finite())) || self.steps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput(
                "steps must be positive and strictly decreasing".into(),
            ));
        }
        if self.deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidInput("apertures δₙ must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::InvalidInput("jitter must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn random_product_unit(rng: &mut ChaCha8Rng, like: &ProductPoint) -> ProductPoint {
    let (nx, ny) = like.dims();
    let v = random_unit(rng, nx + ny);
    let p = ProductPoint::new(
        Point {
            coords: v[..nx].to_vec(),
            norm_kind: like.x.norm_kind,
        },
        Point {
            coords: v[nx..].to_vec(),
            norm_kind: like.y.norm_kind,
        },
    );
    let n = product_norm(&p);
    p.scale(1.0 / n)
}

/// Points `wₙ = base + tₙ(u,v) + jₙ` with `‖jₙ‖ ≤ δₙtₙ`, so `wₙ − base ∈ cone B((u,v), δₙ)`.
///
/// The jitter radius is additionally capped so that `‖wₙ − base‖` decreases
/// strictly. For the zero direction, `wₙ = base + tₙ·eₙ` with random unit `eₙ`.
pub fn directional_sequence(
    base: &ProductPoint,
    d: &DirectionSpec,
    schedule: &DirectionalSchedule,
) -> Result<Vec<ProductPoint>> {
    schedule.validate()?;
    base.check_dims(&d.dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let a = product_norm(&d.dir);
    if a == 0.0 {
        return Ok(schedule
            .steps
            .iter()
            .map(|&t| base.add(&random_product_unit(&mut rng, base).scale(t)))
            .collect());
    }
    // With ρₙ ≤ κ·a·tₙ and κ < (1−r)/(1+r) for every step ratio r, norms stay strictly decreasing.
    let kappa = schedule
        .steps
        .windows(2)
        .map(|w| {
            let r = w[1] / w[0];
            0.5 * (1.0 - r) / (1.0 + r)
        })
        .fold(f64::INFINITY, f64::min);
    let mut out = Vec::with_capacity(schedule.steps.len());
    for (&t, &delta) in schedule.steps.iter().zip(&schedule.deltas) {
        let radius = schedule.jitter * t * delta.min(kappa * a);
        let jitter = random_product_unit(&mut rng, base).scale(radius);
        out.push(base.add(&d.dir.scale(t)).add(&jitter));
    }
    Ok(out)
}
