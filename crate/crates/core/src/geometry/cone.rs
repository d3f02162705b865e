use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm2, random_unit};
use crate::solvers::lp::{solve_lp, LinearProgram, LpStatus};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Closed convex cone in `Rⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Cone {
    /// `{h : r·h ≤ 0 for every row r}`.
    Inequality {
        dim: usize,
        rows: Vec<Vec<f64>>,
    },
    /// Nonnegative combinations of the generators.
    Generated {
        dim: usize,
        generators: Vec<Vec<f64>>,
    },
    WholeSpace {
        dim: usize,
    },
    Zero {
        dim: usize,
    },
}

impl Cone {
    pub fn dim(&self) -> usize {
        match self {
            Cone::Inequality { dim, .. }
            | Cone::Generated { dim, .. }
            | Cone::WholeSpace { dim }
            | Cone::Zero { dim } => *dim,
        }
    }

    /// Distance-like residual of `h` from the cone: zero iff `h` is a member.
    ///
    /// Inequality cones report the largest row violation, generated cones the
    /// ℓ¹ distance to the cone, and `Zero` the norm of `h`.
    pub fn residual(&self, h: &[f64]) -> Result<f64> {
        check_dim(self.dim(), h.len())?;
        Ok(match self {
            Cone::WholeSpace { .. } => 0.0,
            Cone::Zero { .. } => norm2(h),
            Cone::Inequality { rows, .. } => rows.iter().map(|r| dot(r, h)).fold(0.0, f64::max),
            Cone::Generated { generators, .. } => generated_residual(generators, h)?,
        })
    }

    /// Membership with tolerance `tol·(1 + ‖h‖)`.
    pub fn contains(&self, h: &[f64], tol: f64) -> Result<bool> {
        Ok(self.residual(h)? <= tol * (1.0 + norm2(h)))
    }

    /// Polar cone `{λ : ⟨λ, h⟩ ≤ 0 for all h in the cone}`.
    pub fn polar(&self) -> Cone {
        let dim = self.dim();
        match self {
            Cone::WholeSpace { .. } => Cone::Zero { dim },
            Cone::Zero { .. } => Cone::WholeSpace { dim },
            Cone::Inequality { rows, .. } => {
                if rows.is_empty() {
                    Cone::Zero { dim }
                } else {
                    Cone::Generated {
                        dim,
                        generators: rows.clone(),
                    }
                }
            }
            Cone::Generated { generators, .. } => {
                if generators.is_empty() {
                    Cone::WholeSpace { dim }
                } else {
                    Cone::Inequality {
                        dim,
                        rows: generators.clone(),
                    }
                }
            }
        }
    }

    /// Rows `R` with cone `= {h : R h ≤ 0}`, when available without a facet enumeration.
    pub fn inequality_rows(&self) -> Option<Vec<Vec<f64>>> {
        let dim = self.dim();
        match self {
            Cone::WholeSpace { .. } => Some(Vec::new()),
            Cone::Zero { .. } => Some(signed_axes(dim)),
            Cone::Inequality { rows, .. } => Some(rows.clone()),
            Cone::Generated { .. } => None,
        }
    }

    /// Generators `G` with cone `= {Gμ : μ ≥ 0}`, when available without a vertex enumeration.
    pub fn generators(&self) -> Option<Vec<Vec<f64>>> {
        let dim = self.dim();
        match self {
            Cone::WholeSpace { .. } => Some(signed_axes(dim)),
            Cone::Zero { .. } => Some(Vec::new()),
            Cone::Generated { generators, .. } => Some(generators.clone()),
            Cone::Inequality { .. } => None,
        }
    }

    /// Random member of the cone (used for property checks).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let dim = self.dim();
        match self {
            Cone::WholeSpace { .. } => Ok(random_unit(rng, dim)),
            Cone::Zero { .. } => Ok(vec![0.0; dim]),
            Cone::Generated { generators, .. } => {
                let mut v = vec![0.0; dim];
                for g in generators {
                    let w: f64 = rng.random::<f64>();
                    for (vi, gi) in v.iter_mut().zip(g) {
                        *vi += w * gi;
                    }
                }
                Ok(v)
            }
            Cone::Inequality { rows, .. } => {
                // Rejection sampling on the sphere, falling back to the apex.
                for _ in 0..2_000 {
                    let h = random_unit(rng, dim);
                    if rows.iter().all(|r| dot(r, &h) <= 0.0) {
                        return Ok(h);
                    }
                }
                if rows.is_empty() {
                    return Err(Error::NumericalFailure("sampling failed".into()));
                }
                Ok(vec![0.0; dim])
            }
        }
    }
}

fn signed_axes(dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * dim);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            out.push(e);
        }
    }
    out
}

/// `min ‖Gμ − h‖₁` over `μ ≥ 0`, solved as an LP.
fn generated_residual(generators: &[Vec<f64>], h: &[f64]) -> Result<f64> {
    let n = h.len();
    let p = generators.len();
    if p == 0 {
        return Ok(crate::linalg::norm1(h));
    }
    // Variables (μ, s⁺, s⁻) ≥ 0 with Gμ + s⁺ − s⁻ = h.
    let mut c = vec![0.0; p];
    c.extend(std::iter::repeat_n(1.0, 2 * n));
    let mut lp = LinearProgram::new(c);
    for i in 0..n {
        let mut row: Vec<f64> = generators.iter().map(|g| g[i]).collect();
        let mut sp = vec![0.0; n];
        sp[i] = 1.0;
        let mut sm = vec![0.0; n];
        sm[i] = -1.0;
        row.extend(sp);
        row.extend(sm);
        lp = lp.eq(row, h[i]);
    }
    let s = solve_lp(&lp)?;
    match s.status {
        LpStatus::Optimal => Ok(s.objective.max(0.0)),
        _ => Err(Error::NumericalFailure("cone membership LP failed".into())),
    }
}
