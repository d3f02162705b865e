//! Dense two-phase simplex with Bland's pivoting rule.
//!
//! Problems have the form
//!
//! ```text
//! minimize  cᵀz   subject to   A z ≤ b,   E z = f,   lo ≤ z ≤ hi
//! ```
//!
//! with `±∞` allowed in the bounds. Multipliers follow the Lagrangian
//! `cᵀz + μᵀ(Az − b) + νᵀ(Ez − f) − rᵀz`, so `μ ≥ 0` and the reduced costs
//! `r = c + Aᵀμ + Eᵀν` are nonnegative at active lower bounds and
//! nonpositive at active upper bounds.

use crate::error::{check_dim, Error, Result};
use crate::serde_ext::{real, reals};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    #[serde(with = "reals")]
    pub c: Vec<f64>,
    #[serde(default)]
    pub a_ub: Vec<Vec<f64>>,
    #[serde(default, with = "reals")]
    pub b_ub: Vec<f64>,
    #[serde(default)]
    pub a_eq: Vec<Vec<f64>>,
    #[serde(default, with = "reals")]
    pub b_eq: Vec<f64>,
    #[serde(with = "reals")]
    pub lower: Vec<f64>,
    #[serde(with = "reals")]
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// Program over `z ≥ 0` with no rows.
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        LinearProgram {
            c,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    /// Program over free variables with no rows.
    pub fn free(c: Vec<f64>) -> Self {
        let n = c.len();
        let mut lp = Self::new(c);
        lp.lower = vec![f64::NEG_INFINITY; n];
        lp
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn leq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    pub fn bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if n == 0 {
            return Err(Error::InvalidInput("linear program has no variables".into()));
        }
        check_dim(n, self.lower.len())?;
        check_dim(n, self.upper.len())?;
        check_dim(self.a_ub.len(), self.b_ub.len())?;
        check_dim(self.a_eq.len(), self.b_eq.len())?;
        for row in self.a_ub.iter().chain(&self.a_eq) {
            check_dim(n, row.len())?;
        }
        let finite = self
            .c
            .iter()
            .chain(self.a_ub.iter().flatten())
            .chain(self.a_eq.iter().flatten())
            .chain(&self.b_ub)
            .chain(&self.b_eq)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite LP data".into()));
        }
        for j in 0..n {
            let (l, h) = (self.lower[j], self.upper[j]);
            if l.is_nan() || h.is_nan() || l == f64::INFINITY || h == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!("bad bounds on variable {j}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    #[serde(with = "reals")]
    pub x: Vec<f64>,
    #[serde(with = "real")]
    pub objective: f64,
    /// `μ ≥ 0`, one per inequality row.
    #[serde(with = "reals")]
    pub ineq_duals: Vec<f64>,
    /// `ν`, one per equality row.
    #[serde(with = "reals")]
    pub eq_duals: Vec<f64>,
    /// Reduced costs `r = c + Aᵀμ + Eᵀν`.
    #[serde(with = "reals")]
    pub reduced_costs: Vec<f64>,
    #[serde(with = "real")]
    pub dual_objective: f64,
}

impl LpSolution {
    fn with_status(status: LpStatus, lp: &LinearProgram) -> Self {
        let objective = match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        LpSolution {
            status,
            x: Vec::new(),
            objective,
            ineq_duals: vec![0.0; lp.a_ub.len()],
            eq_duals: vec![0.0; lp.a_eq.len()],
            reduced_costs: vec![0.0; lp.n_vars()],
            dual_objective: objective,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// How an original variable maps onto nonnegative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `z = lo + p`
    Shift { col: usize, lo: f64 },
    /// `z = hi − p`
    Flip { col: usize, hi: f64 },
    /// `z = p⁺ − p⁻`
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    /// Row-major constraint matrix `A_s`, one row per standard-form equation.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    n_cols: usize,
    maps: Vec<VarMap>,
    /// `±1` multiplier applied to each row to make its rhs nonnegative.
    flip: Vec<f64>,
    n_ineq: usize,
    n_bound_rows: usize,
}

fn standard_form(lp: &LinearProgram) -> StandardForm {
    let n = lp.n_vars();
    let mut maps = Vec::with_capacity(n);
    let mut n_cols = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, h) = (lp.lower[j], lp.upper[j]);
        if l.is_finite() {
            maps.push(VarMap::Shift { col: n_cols, lo: l });
            if h.is_finite() {
                bound_rows.push((n_cols, h - l));
            }
            n_cols += 1;
        } else if h.is_finite() {
            maps.push(VarMap::Flip { col: n_cols, hi: h });
            n_cols += 1;
        } else {
            maps.push(VarMap::Split {
                pos: n_cols,
                neg: n_cols + 1,
            });
            n_cols += 2;
        }
    }
    let n_ineq = lp.a_ub.len();
    let n_bound_rows = bound_rows.len();
    let n_slack = n_ineq + n_bound_rows;
    let total_cols = n_cols + n_slack;

    // Substitute z = offset + T p into a dense row, returning (row over p, constant).
    let transform = |row: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; total_cols];
        let mut constant = 0.0;
        for (j, m) in maps.iter().enumerate() {
            let a = row[j];
            match *m {
                VarMap::Shift { col, lo } => {
                    out[col] += a;
                    constant += a * lo;
                }
                VarMap::Flip { col, hi } => {
                    out[col] -= a;
                    constant += a * hi;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, constant)
    };

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (i, row) in lp.a_ub.iter().enumerate() {
        let (mut r, k) = transform(row);
        r[n_cols + i] = 1.0;
        rows.push(r);
        rhs.push(lp.b_ub[i] - k);
    }
    for (k, &(col, width)) in bound_rows.iter().enumerate() {
        let mut r = vec![0.0; total_cols];
        r[col] = 1.0;
        r[n_cols + n_ineq + k] = 1.0;
        rows.push(r);
        rhs.push(width);
    }
    for (i, row) in lp.a_eq.iter().enumerate() {
        let (r, k) = transform(row);
        rows.push(r);
        rhs.push(lp.b_eq[i] - k);
    }
    let (cost_row, _) = transform(&lp.c);
    let mut flip = vec![1.0; rows.len()];
    for i in 0..rows.len() {
        if rhs[i] < 0.0 {
            flip[i] = -1.0;
            rhs[i] = -rhs[i];
            for v in rows[i].iter_mut() {
                *v = -*v;
            }
        }
    }
    StandardForm {
        rows,
        rhs,
        cost: cost_row,
        n_cols: total_cols,
        maps,
        flip,
        n_ineq,
        n_bound_rows,
    }
}

/// Dense tableau: `m` rows, columns `0..n_cols` structural+slack, then `m` artificials, then rhs.
struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    m: usize,
}

enum PivotOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n_struct + self.m
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width() + 1;
        let p = self.t[r][c];
        for j in 0..w {
            self.t[r][j] /= p;
        }
        let pivot_row = self.t[r].clone();
        for i in 0..self.t.len() {
            if i != r {
                let f = self.t[i][c];
                if f != 0.0 {
                    for j in 0..w {
                        self.t[i][j] -= f * pivot_row[j];
                    }
                    self.t[i][c] = 0.0;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost · columns` with Bland's rule over columns `allowed`.
    fn run(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> PivotOutcome {
        let w = self.width();
        for _ in 0..MAX_PIVOTS {
            // Reduced costs d_j = c_j − c_Bᵀ B⁻¹ a_j, computed from the current tableau.
            let mut entering = None;
            for j in 0..w {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, &b) in self.basis.iter().enumerate() {
                    d -= cost[b] * self.t[i][j];
                }
                if d < -COST_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return PivotOutcome::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.t[i][w] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 * (1.0 + lr.abs())
                                || (ratio <= lr + 1e-14 * (1.0 + lr.abs()) && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return PivotOutcome::Unbounded,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        PivotOutcome::IterationLimit
    }
}

/// Solves `lp` to optimality or reports infeasibility/unboundedness.
///
/// Results are validated against primal feasibility, complementary slackness and
/// the duality gap; any failed check yields [`LpStatus::NumericalFailure`].
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let sf = standard_form(lp);
    let m = sf.rows.len();
    let n_struct = sf.n_cols;

    if m == 0 {
        return Ok(solve_rowless(lp, &sf));
    }

    let mut t = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = sf.rows[i].clone();
        row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
        row.push(sf.rhs[i]);
        t.push(row);
    }
    let mut tab = Tableau {
        t,
        basis: (n_struct..n_struct + m).collect(),
        n_struct,
        m,
    };

    // Phase 1.
    let mut cost1 = vec![0.0; n_struct + m];
    for c in cost1.iter_mut().skip(n_struct) {
        *c = 1.0;
    }
    match tab.run(&cost1, &|_| true) {
        PivotOutcome::Optimal => {}
        _ => return Ok(LpSolution::with_status(LpStatus::NumericalFailure, lp)),
    }
    let infeas: f64 = (0..m)
        .filter(|&i| tab.basis[i] >= n_struct)
        .map(|i| tab.t[i][n_struct + m])
        .sum();
    let bscale = 1.0 + sf.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if infeas > 1e-9 * bscale {
        return Ok(LpSolution::with_status(LpStatus::Infeasible, lp));
    }

    // Drive artificials out of the basis; rows where that is impossible are redundant.
    let mut redundant = vec![false; m];
    for i in 0..m {
        if tab.basis[i] >= n_struct {
            let col = (0..n_struct)
                .filter(|&j| !tab.basis.contains(&j))
                .find(|&j| tab.t[i][j].abs() > 1e-9);
            match col {
                Some(j) => tab.pivot(i, j),
                None => {
                    redundant[i] = true;
                    for v in tab.t[i].iter_mut().take(n_struct) {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    // Phase 2 over structural columns only.
    let mut cost2 = sf.cost.clone();
    cost2.resize(n_struct + m, 0.0);
    let ns = n_struct;
    match tab.run(&cost2, &|j| j < ns) {
        PivotOutcome::Optimal => {}
        PivotOutcome::Unbounded => return Ok(LpSolution::with_status(LpStatus::Unbounded, lp)),
        PivotOutcome::IterationLimit => return Ok(LpSolution::with_status(LpStatus::NumericalFailure, lp)),
    }

    // Recompute the basic solution and the row duals from the final basis.
    let live: Vec<usize> = (0..m).filter(|&i| !redundant[i]).collect();
    let basic_cols: Vec<usize> = live.iter().map(|&i| tab.basis[i]).collect();
    let k = live.len();
    let bmat = DMatrix::from_fn(k, k, |r, c| sf.rows[live[r]][basic_cols[c]]);
    let lu = bmat.clone().lu();
    let rhs = DVector::from_iterator(k, live.iter().map(|&i| sf.rhs[i]));
    let Some(xb) = lu.solve(&rhs) else {
        return Ok(LpSolution::with_status(LpStatus::NumericalFailure, lp));
    };
    let cb = DVector::from_iterator(k, basic_cols.iter().map(|&j| sf.cost[j]));
    let Some(yl) = bmat.transpose().lu().solve(&cb) else {
        return Ok(LpSolution::with_status(LpStatus::NumericalFailure, lp));
    };
    let mut p = vec![0.0; n_struct];
    for (r, &j) in basic_cols.iter().enumerate() {
        p[j] = xb[r].max(0.0);
    }
    let mut y = vec![0.0; m];
    for (r, &i) in live.iter().enumerate() {
        y[i] = yl[r] * sf.flip[i];
    }
    Ok(finish(lp, &sf, &p, &y))
}

fn solve_rowless(lp: &LinearProgram, sf: &StandardForm) -> LpSolution {
    // Every column is independent: sit at the bound favored by its cost.
    if sf.cost.iter().any(|&c| c < -COST_TOL) {
        return LpSolution::with_status(LpStatus::Unbounded, lp);
    }
    let p = vec![0.0; sf.n_cols];
    finish(lp, sf, &p, &[])
}

fn finish(lp: &LinearProgram, sf: &StandardForm, p: &[f64], y: &[f64]) -> LpSolution {
    let n = lp.n_vars();
    let mut x = vec![0.0; n];
    for (j, m) in sf.maps.iter().enumerate() {
        x[j] = match *m {
            VarMap::Shift { col, lo } => lo + p[col],
            VarMap::Flip { col, hi } => hi - p[col],
            VarMap::Split { pos, neg } => p[pos] - p[neg],
        };
        x[j] = x[j].clamp(lp.lower[j], lp.upper[j]);
    }
    let mu: Vec<f64> = (0..sf.n_ineq)
        .map(|i| (-y.get(i).copied().unwrap_or(0.0)).max(0.0))
        .collect();
    let eq_off = sf.n_ineq + sf.n_bound_rows;
    let nu: Vec<f64> = (0..lp.a_eq.len())
        .map(|i| -y.get(eq_off + i).copied().unwrap_or(0.0))
        .collect();
    let mut r = lp.c.clone();
    for (i, row) in lp.a_ub.iter().enumerate() {
        for j in 0..n {
            r[j] += row[j] * mu[i];
        }
    }
    for (i, row) in lp.a_eq.iter().enumerate() {
        for j in 0..n {
            r[j] += row[j] * nu[i];
        }
    }
    let objective: f64 = crate::linalg::dot(&lp.c, &x);
    let scale = 1.0 + objective.abs() + crate::linalg::norm_inf(&lp.c);
    for v in r.iter_mut() {
        if v.abs() <= 1e-10 * scale {
            *v = 0.0;
        }
    }
    let mut dual_objective = 0.0;
    for (i, m) in mu.iter().enumerate() {
        dual_objective -= m * lp.b_ub[i];
    }
    for (i, v) in nu.iter().enumerate() {
        dual_objective -= v * lp.b_eq[i];
    }
    for j in 0..n {
        if r[j] > 0.0 {
            dual_objective += r[j] * lp.lower[j];
        } else if r[j] < 0.0 {
            dual_objective += r[j] * lp.upper[j];
        }
    }

    let sol = LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        ineq_duals: mu,
        eq_duals: nu,
        reduced_costs: r,
        dual_objective,
    };
    if certify(lp, &sol) {
        sol
    } else {
        LpSolution {
            status: LpStatus::NumericalFailure,
            ..sol
        }
    }
}

/// Primal feasibility, complementary slackness and duality-gap checks.
fn certify(lp: &LinearProgram, s: &LpSolution) -> bool {
    let bnorm = crate::linalg::norm2(&lp.b_ub) + crate::linalg::norm2(&lp.b_eq);
    let feas_tol = 1e-9 * (1.0 + bnorm);
    let mut comp = 0.0f64;
    for (i, row) in lp.a_ub.iter().enumerate() {
        let slack = lp.b_ub[i] - crate::linalg::dot(row, &s.x);
        if slack < -feas_tol {
            return false;
        }
        comp = comp.max((s.ineq_duals[i] * slack).abs());
    }
    for (i, row) in lp.a_eq.iter().enumerate() {
        if (crate::linalg::dot(row, &s.x) - lp.b_eq[i]).abs() > feas_tol {
            return false;
        }
    }
    for j in 0..lp.n_vars() {
        let r = s.reduced_costs[j];
        let gap = if r > 0.0 {
            s.x[j] - lp.lower[j]
        } else if r < 0.0 {
            lp.upper[j] - s.x[j]
        } else {
            0.0
        };
        if !gap.is_finite() {
            return false;
        }
        comp = comp.max((r * gap).abs());
    }
    let scale = 1.0 + s.objective.abs();
    if comp > 1e-8 * scale {
        return false;
    }
    if !s.dual_objective.is_finite() || (s.dual_objective - s.objective).abs() > 1e-8 * scale {
        return false;
    }
    s.dual_objective <= s.objective + 1e-10 * scale
}
