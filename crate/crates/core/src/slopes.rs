//! Sampled estimators of the local slope `|∇h|(x)`, the nonlocal slope
//! `|Γh|(x)` and the slopes of `φ^γ(·, y)`.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm2, random_unit, unit_axis};
use crate::maps::{SearchRegion, SetValuedMap};
use crate::serde_ext::real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Slope value with the per-radius raw sups behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    /// Nonnegative, or `+∞` when `h(x) = +∞`.
    #[serde(with = "real")]
    pub value: f64,
    pub levels: Vec<SlopeLevel>,
    pub converged: bool,
    pub samples_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeLevel {
    #[serde(with = "real")]
    pub radius: f64,
    #[serde(with = "real")]
    pub sup_ratio: f64,
}

impl SlopeEstimate {
    fn infinite() -> Self {
        SlopeEstimate {
            value: f64::INFINITY,
            levels: Vec::new(),
            converged: true,
            samples_used: 0,
        }
    }

    fn zero() -> Self {
        SlopeEstimate {
            value: 0.0,
            levels: Vec::new(),
            converged: true,
            samples_used: 0,
        }
    }
}

/// `(3 − √5)/2`, the golden angle as a fraction of a full turn.
const GOLDEN_ANGLE_TURNS: f64 = 0.381_966_011_250_105_1;

fn default_halvings() -> usize {
    8
}
fn default_directions() -> usize {
    64
}

/// Radii `r₀·2⁻ᵏ`, `k = 0..=halvings`, each probed along seeded random unit
/// directions plus the signed coordinate axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSchedule {
    /// Defaults to `0.1·(1 + ‖x‖)`.
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default = "default_halvings")]
    pub halvings: usize,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SlopeSchedule {
    fn default() -> Self {
        SlopeSchedule {
            r0: None,
            halvings: default_halvings(),
            directions: default_directions(),
            seed: 0,
        }
    }
}

impl SlopeSchedule {
    pub fn with_r0(r0: f64) -> Self {
        SlopeSchedule {
            r0: Some(r0),
            ..Default::default()
        }
    }

    fn initial_radius(&self, x: &[f64]) -> f64 {
        self.r0.unwrap_or(0.1 * (1.0 + norm2(x)))
    }

    fn radii(&self, x: &[f64]) -> Vec<f64> {
        let r0 = self.initial_radius(x);
        (0..=self.halvings).map(|k| r0 * 0.5f64.powi(k as i32)).collect()
    }

    /// Evenly spread directions in dimensions 2 and 3 (seeded rotation of an
    /// equiangular or Fibonacci set), Gaussian ones above, plus `±eᵢ`.
    fn unit_directions(&self, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let m = self.directions;
        let phase = rng.random::<f64>();
        let mut dirs: Vec<Vec<f64>> = match n {
            1 => Vec::new(),
            2 => (0..m)
                .map(|k| {
                    let a = TAU * (k as f64 + phase) / m as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect(),
            3 => (0..m)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / m as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let a = TAU * (k as f64 * GOLDEN_ANGLE_TURNS + phase);
                    vec![rho * a.cos(), rho * a.sin(), z]
                })
                .collect(),
            _ => (0..m).map(|_| random_unit(&mut rng, n)).collect(),
        };
        for i in 0..n {
            dirs.push(unit_axis(n, i, 1.0));
            dirs.push(unit_axis(n, i, -1.0));
        }
        dirs
    }

    fn validate(&self) -> Result<()> {
        if let Some(r) = self.r0 {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidInput("initial slope radius must be positive".into()));
            }
        }
        if self.halvings == 0 {
            return Err(Error::InvalidInput("slope schedule needs at least one halving".into()));
        }
        Ok(())
    }
}

fn value_at(h: &impl Fn(&[f64]) -> f64, x: &[f64]) -> Result<Option<f64>> {
    let hx = h(x);
    if hx.is_nan() || hx == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(format!("function value at x is {hx}")));
    }
    Ok((hx != f64::INFINITY).then_some(hx))
}

fn offset(x: &[f64], d: &[f64], r: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + r * b).collect()
}

/// `|∇h|(x) = limsup_{y→x} (h(x) − h(y))/‖x − y‖`, 0 at local minima.
///
/// The per-radius sups `sₖ` are extrapolated as `2sₖ − sₖ₋₁`, which removes
/// their first-order drift in `r`; the value is the last extrapolate clipped at
/// 0, and exactly 0 when no sample at any radius falls below `h(x)`.
/// Converged when the last two extrapolates differ by less than `1e−5·(1 + value)`.
pub fn local_slope<F: Fn(&[f64]) -> f64>(h: F, x: &[f64], schedule: &SlopeSchedule) -> Result<SlopeEstimate> {
    schedule.validate()?;
    if x.is_empty() {
        return Err(Error::InvalidInput("point has dimension 0".into()));
    }
    let Some(hx) = value_at(&h, x)? else {
        return Ok(SlopeEstimate::infinite());
    };
    let dirs = schedule.unit_directions(x.len());
    let mut levels = Vec::new();
    let mut local_min = true;
    let mut samples = 0;
    for r in schedule.radii(x) {
        let mut sup = f64::NEG_INFINITY;
        for d in &dirs {
            let hy = h(&offset(x, d, r));
            samples += 1;
            if hy.is_nan() {
                continue;
            }
            if hy < hx {
                local_min = false;
            }
            sup = sup.max((hx - hy) / r);
        }
        levels.push(SlopeLevel {
            radius: r,
            sup_ratio: sup,
        });
    }
    let ext = |k: usize| {
        let (a, b) = (levels[k].sup_ratio, levels[k - 1].sup_ratio);
        if a.is_finite() && b.is_finite() {
            2.0 * a - b
        } else {
            a
        }
    };
    let k = levels.len() - 1;
    let (last, prev) = (ext(k), if k >= 2 { ext(k - 1) } else { levels[0].sup_ratio });
    let value = if local_min { 0.0 } else { last.max(0.0) };
    let converged = local_min || (last.max(0.0) - prev.max(0.0)).abs() < 1e-5 * (1.0 + value);
    Ok(SlopeEstimate {
        value,
        levels,
        converged,
        samples_used: samples,
    })
}

/// Lattice ratio between consecutive nonlocal probe radii.
const LATTICE_RATIO: f64 = 0.8;

/// `|Γh|(x) = sup_{y≠x} [h(x) − h(y)]₊/‖x − y‖`, estimated from below.
///
/// Probes lie on a fixed radial lattice `(1+‖x‖)·10⁴·0.8ʲ` down to
/// `(1+‖x‖)·10⁻⁸` along the schedule's directions; lattice points outside
/// `region` are excluded. The local schedule's probes and the `extra`
/// candidates are always included. Points within `1e−9` of `x` are skipped.
/// Because the lattice does not depend on the region, enlarging the region
/// can only add probes.
pub fn nonlocal_slope<F: Fn(&[f64]) -> f64>(
    h: F,
    x: &[f64],
    region: &SearchRegion,
    schedule: &SlopeSchedule,
    extra: &[Vec<f64>],
) -> Result<SlopeEstimate> {
    schedule.validate()?;
    check_dim(region.dim(), x.len())?;
    region.validate()?;
    let Some(hx) = value_at(&h, x)? else {
        return Ok(SlopeEstimate::infinite());
    };
    let dirs = schedule.unit_directions(x.len());
    let scale = 1.0 + norm2(x);
    let mut levels = Vec::new();
    let mut samples = 0;
    let mut best = 0.0f64;
    let probe = |y: &[f64], samples: &mut usize| -> f64 {
        let d = crate::linalg::dist2(x, y);
        if d == 0.0 {
            return f64::NEG_INFINITY;
        }
        *samples += 1;
        let hy = h(y);
        if hy.is_nan() {
            return f64::NEG_INFINITY;
        }
        (hx - hy) / d
    };
    let mut r = 1e4 * scale;
    while r >= 1e-8 * scale {
        let mut sup = f64::NEG_INFINITY;
        for d in &dirs {
            let y = offset(x, d, r);
            if region.contains(&y, 0.0) {
                sup = sup.max(probe(&y, &mut samples));
            }
        }
        if sup > f64::NEG_INFINITY {
            levels.push(SlopeLevel {
                radius: r,
                sup_ratio: sup,
            });
            best = best.max(sup);
        }
        r *= LATTICE_RATIO;
    }
    for r in schedule.radii(x) {
        for d in &dirs {
            best = best.max(probe(&offset(x, d, r), &mut samples));
        }
    }
    for y in extra {
        check_dim(x.len(), y.len())?;
        best = best.max(probe(y, &mut samples));
    }
    Ok(SlopeEstimate {
        value: best,
        levels,
        converged: true,
        samples_used: samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlopeKind {
    Local,
    Nonlocal,
}

/// Slope of `u ↦ φ(u, y)^γ` at `x`.
///
/// Points with `φ(x, y) = 0` are global minimizers and get slope 0. Outside
/// the map's domain `φ = +∞`. The local schedule starts at
/// `0.1·min(1 + ‖x‖, φ^γ)` so its radii resolve the distance to the zero set
/// of `φ`; the nonlocal estimate adds the inverse-distance witness as a probe.
pub fn holder_slope_of_phi(
    map: &SetValuedMap,
    y: &[f64],
    x: &[f64],
    gamma: f64,
    kind: SlopeKind,
    region: &SearchRegion,
) -> Result<SlopeEstimate> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput("γ must lie in (0, 1]".into()));
    }
    let phi = map.envelope_phi(x, y)?;
    if phi == 0.0 {
        return Ok(SlopeEstimate::zero());
    }
    let h = |u: &[f64]| {
        if map.in_domain(u) {
            map.image_distance_raw(u, y).powf(gamma)
        } else {
            f64::INFINITY
        }
    };
    match kind {
        SlopeKind::Local => {
            let r0 = 0.1 * (1.0 + norm2(x)).min(phi.powf(gamma));
            local_slope(h, x, &SlopeSchedule::with_r0(r0))
        }
        SlopeKind::Nonlocal => {
            let extra = match map.inverse_distance(x, y, region) {
                Ok(w) => vec![w.witness],
                Err(Error::EmptyInverse) => Vec::new(),
                Err(e) => return Err(e),
            };
            nonlocal_slope(h, x, region, &SlopeSchedule::default(), &extra)
        }
    }
}
