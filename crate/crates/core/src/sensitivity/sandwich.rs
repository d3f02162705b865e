use super::linearized::{dual_over, LinearizedRange};
use super::{linearized_primal, multiplier_set, solve_program, ParametricProgram, SolveStatus};
use crate::error::{check_dim, Error, Result};
use crate::linalg::random_unit;
use crate::serde_ext::{real, real_opt, reals};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Tolerance for comparing difference quotients with the multiplier bounds.
pub const SANDWICH_TOL: f64 = 1e-3;

/// Steps `t₀·2⁻ᵏ` with `perturbations` extra paths `td + t²e` per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSchedule {
    pub t0: f64,
    pub levels: usize,
    pub perturbations: usize,
    pub seed: u64,
}

impl Default for DerivativeSchedule {
    fn default() -> Self {
        DerivativeSchedule {
            t0: 0.05,
            levels: 9,
            perturbations: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeLevel {
    #[serde(with = "real")]
    pub t: f64,
    /// `(v(y(t)) − v(0))/t`, straight path first.
    #[serde(with = "reals")]
    pub quotients: Vec<f64>,
    /// Paths whose program had no feasible point; the level is then skipped.
    pub infeasible: usize,
}

/// Difference quotients of `v` at `0` along paths `y(t) = td + o(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDerivative {
    #[serde(with = "reals")]
    pub d: Vec<f64>,
    #[serde(with = "real")]
    pub base_value: f64,
    pub levels: Vec<DerivativeLevel>,
    /// Min and max quotient at the finest level without infeasible paths.
    #[serde(with = "real")]
    pub fd_lower: f64,
    #[serde(with = "real")]
    pub fd_upper: f64,
    /// Some solve was degraded, or the finest level was skipped.
    pub degraded: bool,
}

pub fn value_directional_derivative(
    p: &ParametricProgram,
    d: &[f64],
    schedule: &DerivativeSchedule,
) -> Result<ValueDerivative> {
    check_dim(p.y_dim(), d.len())?;
    if !(schedule.t0 > 0.0) || schedule.levels == 0 {
        return Err(Error::InvalidInput(
            "derivative schedule needs t₀ > 0 and at least one level".into(),
        ));
    }
    let m = p.y_dim();
    let base = solve_program(p, &vec![0.0; m])?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut jobs = Vec::new();
    for k in 0..schedule.levels {
        let t = schedule.t0 * 0.5f64.powi(k as i32);
        jobs.push((k, t, d.iter().map(|v| t * v).collect::<Vec<f64>>()));
        for _ in 0..schedule.perturbations {
            let e = random_unit(&mut rng, m);
            jobs.push((k, t, d.iter().zip(&e).map(|(v, ei)| t * v + t * t * ei).collect()));
        }
    }
    let solved: Vec<Result<(f64, bool)>> = jobs
        .par_iter()
        .map(|(_, _, y)| solve_program(p, y).map(|s| (s.value, s.status == SolveStatus::Degraded)))
        .collect();
    let mut degraded = base.status == SolveStatus::Degraded;
    let mut levels: Vec<DerivativeLevel> = (0..schedule.levels)
        .map(|k| DerivativeLevel {
            t: schedule.t0 * 0.5f64.powi(k as i32),
            quotients: Vec::new(),
            infeasible: 0,
        })
        .collect();
    for ((k, t, _), r) in jobs.iter().zip(solved) {
        match r {
            Ok((v, deg)) => {
                degraded |= deg;
                levels[*k].quotients.push((v - base.value) / t);
            }
            Err(Error::Infeasible) => levels[*k].infeasible += 1,
            Err(e) => return Err(e),
        }
    }
    let finest = levels
        .iter()
        .rposition(|l| l.infeasible == 0 && !l.quotients.is_empty());
    let Some(finest) = finest else {
        return Err(Error::Infeasible);
    };
    degraded |= finest + 1 != levels.len();
    let q = &levels[finest].quotients;
    Ok(ValueDerivative {
        d: d.to_vec(),
        base_value: base.value,
        fd_lower: q.iter().copied().fold(f64::INFINITY, f64::min),
        fd_upper: q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        levels,
        degraded,
    })
}

/// Multiplier bounds at one approximate solution of the unperturbed program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionBounds {
    #[serde(with = "reals")]
    pub x: Vec<f64>,
    #[serde(with = "real")]
    pub value: f64,
    pub multipliers_empty: bool,
    pub singleton: bool,
    /// `inf` of `D_yL(x, λ, 0)d` over `Λ(x)`; `−∞` when `Λ(x)` is empty.
    #[serde(with = "real")]
    pub inf_value: f64,
    /// `sup` over `Λ(x)`; `+∞` when `Λ(x)` is empty.
    #[serde(with = "real")]
    pub sup_value: f64,
    /// Optimal value of the linearized primal in direction `d`.
    #[serde(with = "real")]
    pub primal_value: f64,
    /// `|primal − dual|` when both are finite.
    #[serde(with = "real_opt")]
    pub duality_gap: Option<f64>,
    /// `{d, −d} ⊆ Dg(x)X − T_K(g(x))`.
    pub direction_condition: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SandwichStatus {
    Holds,
    Fails,
    /// A solve degraded or some multiplier set was empty.
    Inconclusive,
}

/// Difference quotients of `v` against the multiplier bounds
/// `inf_x inf_λ D_yL·d ≤ v′₋(0, d) ≤ v′₊(0, d) ≤ inf_x sup_λ D_yL·d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    #[serde(with = "reals")]
    pub d: Vec<f64>,
    #[serde(with = "real")]
    pub lower_bound: f64,
    #[serde(with = "real")]
    pub upper_bound: f64,
    #[serde(with = "real")]
    pub fd_lower: f64,
    #[serde(with = "real")]
    pub fd_upper: f64,
    #[serde(with = "real")]
    pub tol: f64,
    pub holds: bool,
    /// Every found solution has a single multiplier.
    pub singleton: bool,
    /// In the singleton case, both quotient extremes equal the common bound within `tol`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singleton_equality: Option<bool>,
    pub status: SandwichStatus,
    pub solutions: Vec<SolutionBounds>,
    pub derivative: ValueDerivative,
}

pub fn sandwich_check(p: &ParametricProgram, d: &[f64], schedule: &DerivativeSchedule) -> Result<SandwichReport> {
    check_dim(p.y_dim(), d.len())?;
    let base = solve_program(p, &vec![0.0; p.y_dim()])?;
    let neg_d: Vec<f64> = d.iter().map(|v| -v).collect();
    let mut solutions = Vec::new();
    for c in &base.clusters {
        let set = multiplier_set(p, &c.x)?;
        let dual = dual_over(&set, d)?;
        let primal = linearized_primal(p, &c.x, d)?;
        let range = LinearizedRange::new(p, &c.x)?;
        let (inf_value, sup_value) = if set.empty {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (dual.min_value, dual.value)
        };
        let duality_gap =
            (primal.objective.is_finite() && dual.value.is_finite()).then(|| (primal.objective - dual.value).abs());
        solutions.push(SolutionBounds {
            x: c.x.clone(),
            value: c.value,
            multipliers_empty: set.empty,
            singleton: set.is_singleton()?,
            inf_value,
            sup_value,
            primal_value: primal.objective,
            duality_gap,
            direction_condition: range.contains(d)? && range.contains(&neg_d)?,
        });
    }
    let lower_bound = solutions.iter().map(|s| s.inf_value).fold(f64::INFINITY, f64::min);
    let upper_bound = solutions.iter().map(|s| s.sup_value).fold(f64::INFINITY, f64::min);
    let derivative = value_directional_derivative(p, d, schedule)?;
    let tol = SANDWICH_TOL;
    let (fd_lower, fd_upper) = (derivative.fd_lower, derivative.fd_upper);
    let mut holds = fd_lower >= lower_bound - tol && fd_upper <= upper_bound + tol;
    let singleton = solutions.iter().all(|s| s.singleton);
    let singleton_equality =
        singleton.then(|| (fd_lower - upper_bound).abs() <= tol && (fd_upper - upper_bound).abs() <= tol);
    if singleton_equality == Some(false) {
        holds = false;
    }
    let inconclusive =
        base.status == SolveStatus::Degraded || derivative.degraded || solutions.iter().any(|s| s.multipliers_empty);
    let status = if inconclusive {
        SandwichStatus::Inconclusive
    } else if holds {
        SandwichStatus::Holds
    } else {
        SandwichStatus::Fails
    };
    Ok(SandwichReport {
        d: d.to_vec(),
        lower_bound,
        upper_bound,
        fd_lower,
        fd_upper,
        tol,
        holds,
        singleton,
        singleton_equality,
        status,
        solutions,
        derivative,
    })
}
