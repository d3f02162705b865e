use super::{estimate_modulus, ModulusReport, RegularityQuery};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{DirectionSpec, Point, ProductPoint};
use crate::linalg::{add, dist2, random_unit};
use crate::maps::SmoothFn;
use crate::serde_ext::{real, reals};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

fn default_t0() -> f64 {
    1e-3
}
fn default_levels() -> usize {
    12
}
fn default_perturbations() -> usize {
    8
}

/// Steps `t₀·2⁻ᵏ`; at each step `w` ranges over `u` and points of `B(u, tₖ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HadamardSchedule {
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_perturbations")]
    pub perturbations: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for HadamardSchedule {
    fn default() -> Self {
        HadamardSchedule {
            t0: default_t0(),
            levels: default_levels(),
            perturbations: default_perturbations(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HadamardEstimate {
    #[serde(with = "reals")]
    pub value: Vec<f64>,
    /// Largest distance between quotients of the same step, per step.
    #[serde(with = "reals")]
    pub spreads: Vec<f64>,
    pub converged: bool,
    /// Quotient spread neither small nor shrinking at the last step.
    pub non_hadamard: bool,
}

/// `lim (g(x̄ + t w) − g(x̄))/t` as `t ↓ 0`, `w → u`.
///
/// The value extrapolates the unperturbed quotients `qₖ` as `2q_K − q_{K−1}`.
/// Converged when the last step's spread is below `10⁻⁵`.
pub fn hadamard_derivative<G>(g: G, xbar: &[f64], u: &[f64], schedule: &HadamardSchedule) -> Result<HadamardEstimate>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    check_dim(xbar.len(), u.len())?;
    if schedule.levels < 2 || !(schedule.t0 > 0.0) {
        return Err(Error::InvalidInput(
            "Hadamard schedule needs t₀ > 0 and two levels".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let g0 = g(xbar);
    let quotient = |t: f64, w: &[f64]| -> Vec<f64> {
        let xt: Vec<f64> = xbar.iter().zip(w).map(|(a, b)| a + t * b).collect();
        g(&xt).iter().zip(&g0).map(|(a, b)| (a - b) / t).collect()
    };
    let mut centers = Vec::new();
    let mut spreads = Vec::new();
    for k in 0..schedule.levels {
        let t = schedule.t0 * 0.5f64.powi(k as i32);
        let mut qs = vec![quotient(t, u)];
        for _ in 0..schedule.perturbations {
            let r = t * rng.random::<f64>();
            let w = add(
                u,
                &random_unit(&mut rng, u.len()).iter().map(|v| r * v).collect::<Vec<_>>(),
            );
            qs.push(quotient(t, &w));
        }
        let mut spread: f64 = 0.0;
        for i in 0..qs.len() {
            for j in i + 1..qs.len() {
                spread = spread.max(dist2(&qs[i], &qs[j]));
            }
        }
        spreads.push(spread);
        centers.push(qs.swap_remove(0));
    }
    let k = centers.len() - 1;
    let value: Vec<f64> = centers[k]
        .iter()
        .zip(&centers[k - 1])
        .map(|(a, b)| 2.0 * a - b)
        .collect();
    let last = spreads[k];
    let converged = last < 1e-5;
    let non_hadamard = !converged && last > 0.5 * spreads[k - 1];
    Ok(HadamardEstimate {
        value,
        spreads,
        converged,
        non_hadamard,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    #[serde(with = "real")]
    pub value: f64,
    pub samples: usize,
}

/// `max ‖g(a) − g(b)‖/‖a − b‖` over sampled pairs in `B(center, radius)`.
///
/// Half the pairs are independent uniform points; the other half are pairs at
/// distance `10⁻⁴·radius`, which capture the local derivative norm. The result
/// is a lower bound of the Lipschitz constant on the ball.
pub fn lipschitz_estimate<G>(g: G, center: &[f64], radius: f64, samples: usize, seed: u64) -> Result<LipschitzEstimate>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(radius > 0.0 && radius.is_finite()) || center.is_empty() {
        return Err(Error::InvalidInput("Lipschitz ball needs a positive radius".into()));
    }
    let n = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_ball = |rng: &mut ChaCha8Rng, r: f64| -> Vec<f64> {
        let s = r * rng.random::<f64>().powf(1.0 / n as f64);
        center.iter().zip(random_unit(rng, n)).map(|(c, d)| c + s * d).collect()
    };
    let h = 1e-4 * radius;
    let mut best: f64 = 0.0;
    for i in 0..samples {
        let (a, b) = if i % 2 == 0 {
            (in_ball(&mut rng, radius), in_ball(&mut rng, radius))
        } else {
            let a = in_ball(&mut rng, radius - h);
            let b = a.iter().zip(random_unit(&mut rng, n)).map(|(v, e)| v + h * e).collect();
            (a, b)
        };
        let dist = dist2(&a, &b);
        if dist > 0.0 {
            best = best.max(dist2(&g(&a), &g(&b)) / dist);
        }
    }
    Ok(LipschitzEstimate { value: best, samples })
}

/// Regularity of `F + g` next to the bound `1/(τ⁻¹ − λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    #[serde(with = "real")]
    pub tau_f: f64,
    #[serde(with = "real")]
    pub lambda: f64,
    pub product_ok: bool,
    #[serde(with = "real")]
    pub tau_perturbed: f64,
    /// `1/(1/τ_F − λ)`, `+∞` when `λτ_F ≥ 1`.
    #[serde(with = "real")]
    pub bound: f64,
    pub within_bound: bool,
    pub direction_shift: HadamardEstimate,
    pub modulus_f: ModulusReport,
    pub modulus_perturbed: ModulusReport,
}

/// Estimates the modulus of `F` and of `F + g` at `(x̄, ȳ + g(x̄))` in direction
/// `(u, v + Dg(x̄)(u))`, with `λ` the sampled Lipschitz constant of `g` on `B(x̄, δ)`.
pub fn perturbation_experiment(q: &RegularityQuery, g_pert: &SmoothFn) -> Result<PerturbationReport> {
    if q.gamma != 1.0 {
        return Err(Error::InvalidInput("the perturbation experiment needs γ = 1".into()));
    }
    q.validate()?;
    g_pert.validate()?;
    let modulus_f = estimate_modulus(q)?;
    let tau_f = modulus_f.tau_estimate;
    let lambda = lipschitz_estimate(|x| g_pert.eval(x), &q.base_x, q.delta, 4000, q.seed)?.value;

    let perturbed_map = q.map.perturbed(g_pert)?;
    let u = q.direction.dir.x.coords.clone();
    let shift = hadamard_derivative(|x| g_pert.eval(x), &q.base_x, &u, &HadamardSchedule::default())?;
    let mut pq = q.clone();
    pq.map = perturbed_map;
    pq.base_y = add(&q.base_y, &g_pert.eval(&q.base_x));
    pq.direction = DirectionSpec::new(
        ProductPoint::new(
            q.direction.dir.x.clone(),
            Point::new(add(&q.direction.dir.y.coords, &shift.value)),
        ),
        q.direction.epsilon,
    )?;
    let modulus_perturbed = estimate_modulus(&pq)?;
    let tau_perturbed = modulus_perturbed.tau_estimate;
    let bound = if tau_f > 0.0 && lambda * tau_f < 1.0 {
        1.0 / (1.0 / tau_f - lambda)
    } else {
        f64::INFINITY
    };
    Ok(PerturbationReport {
        tau_f,
        lambda,
        product_ok: lambda * tau_f < 1.0,
        tau_perturbed,
        bound,
        within_bound: tau_perturbed <= bound * 1.05,
        direction_shift: shift,
        modulus_f,
        modulus_perturbed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;
    use crate::maps::{SearchRegion, SetValuedMap};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hadamard_examples() {
        let g = |x: &[f64]| vec![x[0] * x[0] + x[1], x[0].sin()];
        let h = hadamard_derivative(g, &[0.5, 1.0], &[1.0, -2.0], &HadamardSchedule::default()).unwrap();
        // Jg(x̄)u = (2·0.5·1 − 2, cos 0.5).
        assert_abs_diff_eq!(h.value[0], -1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(h.value[1], 0.5f64.cos(), epsilon = 1e-5);
        assert!(h.converged);

        let h = hadamard_derivative(
            |x: &[f64]| vec![norm2(x)],
            &[0.0, 0.0],
            &[1.0, 0.0],
            &HadamardSchedule::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(h.value[0], 1.0, epsilon = 1e-5);
        assert!(h.converged);

        let h = hadamard_derivative(
            |x: &[f64]| vec![x[0].abs()],
            &[0.0],
            &[0.0],
            &HadamardSchedule::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(h.value[0], 0.0, epsilon = 1e-5);
    }

    #[test]
    fn non_hadamard_flagged() {
        // Direction-dependent oscillation that does not settle as t ↓ 0.
        let g = |x: &[f64]| {
            vec![if x[1] == 0.0 {
                0.0
            } else {
                (x[0] * x[0] / x[1]).sin() * norm2(x)
            }]
        };
        let h = hadamard_derivative(g, &[0.0, 0.0], &[1.0, 0.0], &HadamardSchedule::default()).unwrap();
        assert!(!h.converged);
        assert!(h.non_hadamard);
    }

    #[test]
    fn lipschitz_examples() {
        let a = [[2.0, 1.0], [0.0, 0.5]];
        let g = |x: &[f64]| vec![a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
        // Operator norm by power iteration on AᵀA.
        let mut v = [1.0, 0.3];
        for _ in 0..200 {
            let av = [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
            let w = [a[0][0] * av[0] + a[1][0] * av[1], a[0][1] * av[0] + a[1][1] * av[1]];
            let n = norm2(&w);
            v = [w[0] / n, w[1] / n];
        }
        let av = [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
        let opnorm = norm2(&av);
        let l = lipschitz_estimate(g, &[0.0, 0.0], 1.0, 4000, 1).unwrap();
        assert!((l.value - opnorm).abs() <= 0.02 * opnorm, "{} vs {opnorm}", l.value);
        assert_eq!(
            lipschitz_estimate(|_| vec![1.0], &[0.0], 1.0, 100, 1).unwrap().value,
            0.0
        );
        let l = lipschitz_estimate(|x| vec![0.5 * x[0].sin()], &[0.0], 1.0, 4000, 1).unwrap();
        assert!((l.value - 0.5).abs() <= 0.005);
    }

    fn identity_query(delta: f64) -> RegularityQuery {
        let map = SetValuedMap::single_smooth(SmoothFn::Identity { dim: 1 }, None).unwrap();
        RegularityQuery::new(
            map,
            vec![0.0],
            vec![0.0],
            1.0,
            delta,
            f64::INFINITY,
            SearchRegion::cube(1, 10.0, 64),
        )
        .unwrap()
        .with_samples(1400, 9)
    }

    #[test]
    fn sin_perturbation_within_bound() {
        let r = perturbation_experiment(&identity_query(8.0), &SmoothFn::ScaledSin { scale: 0.5, dim: 1 }).unwrap();
        assert_abs_diff_eq!(r.tau_f, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.lambda, 0.5, epsilon = 5e-3);
        assert!(r.product_ok);
        assert!((r.bound - 2.0).abs() < 0.03);
        assert!(r.tau_perturbed <= 2.0 * 1.05);
        assert!(r.tau_perturbed >= 2.0 * 0.98, "{}", r.tau_perturbed);
        assert!(r.within_bound);
    }

    #[test]
    fn linear_and_zero_perturbations() {
        let r = perturbation_experiment(&identity_query(1.0), &SmoothFn::Zero { in_dim: 1, out_dim: 1 }).unwrap();
        assert_abs_diff_eq!(r.tau_perturbed, 1.0, epsilon = 1e-6);
        let r = perturbation_experiment(
            &identity_query(1.0),
            &SmoothFn::Linear {
                matrix: vec![vec![0.9]],
            },
        )
        .unwrap();
        assert!((r.bound - 10.0).abs() < 0.1);
        assert_abs_diff_eq!(r.tau_perturbed, 1.0 / 1.9, epsilon = 1e-6);
        assert!(r.within_bound);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn hadamard_homogeneous_for_smooth(a in -1.0f64..1.0, b in -1.0f64..1.0, u0 in -1.0f64..1.0, u1 in -1.0f64..1.0) {
            let g = |x: &[f64]| vec![x[0] * x[1] + x[0].exp(), (x[1] - x[0]).sin()];
            let h1 = hadamard_derivative(g, &[a, b], &[u0, u1], &HadamardSchedule::default()).unwrap();
            let h2 = hadamard_derivative(g, &[a, b], &[2.0 * u0, 2.0 * u1], &HadamardSchedule::default()).unwrap();
            for (p, q) in h1.value.iter().zip(&h2.value) {
                prop_assert!((2.0 * p - q).abs() <= 1e-6);
            }
        }
    }
}
