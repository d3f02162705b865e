use super::{Cone, NormKind, Point};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm1, norm2, scale, sub};
use crate::serde_ext::{real, reals};
use crate::solvers::lp::{solve_lp, LinearProgram, LpStatus};
use crate::solvers::qp::{active_tol, l1_nearest_feasible, project_polyhedron};
use serde::{Deserialize, Serialize};

/// Absolute distance tolerance for `p ∈ K`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Closed convex set with a computable projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConvexSet {
    /// `{z : lo ≤ z ≤ hi}` with `±∞` allowed.
    Box {
        #[serde(with = "reals")]
        lo: Vec<f64>,
        #[serde(with = "reals")]
        hi: Vec<f64>,
    },
    /// `{z : A z ≤ b}`.
    Polyhedron {
        a: Vec<Vec<f64>>,
        #[serde(with = "reals")]
        b: Vec<f64>,
    },
    Ball {
        #[serde(with = "reals")]
        center: Vec<f64>,
        #[serde(with = "real")]
        radius: f64,
    },
    Singleton {
        #[serde(with = "reals")]
        p: Vec<f64>,
    },
}

impl ConvexSet {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let k = ConvexSet::Box { lo, hi };
        k.validate()?;
        Ok(k)
    }

    pub fn polyhedron(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let k = ConvexSet::Polyhedron { a, b };
        k.validate()?;
        Ok(k)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let k = ConvexSet::Ball { center, radius };
        k.validate()?;
        Ok(k)
    }

    pub fn singleton(p: Vec<f64>) -> Result<Self> {
        let k = ConvexSet::Singleton { p };
        k.validate()?;
        Ok(k)
    }

    /// `(−∞, 0]ⁿ`.
    pub fn nonpositive_orthant(n: usize) -> Self {
        ConvexSet::Box {
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![0.0; n],
        }
    }

    /// `[0, ∞)ⁿ`.
    pub fn nonnegative_orthant(n: usize) -> Self {
        ConvexSet::Box {
            lo: vec![0.0; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Polyhedron { a, .. } => a.first().map(|r| r.len()).unwrap_or(0),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Singleton { p } => p.len(),
        }
    }

    /// Structural checks; polyhedra are tested for nonemptiness by LP.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::Box { lo, hi } => {
                check_dim(lo.len(), hi.len())?;
                if lo.is_empty() {
                    return Err(Error::InvalidInput("box has dimension 0".into()));
                }
                for (l, h) in lo.iter().zip(hi) {
                    if l.is_nan() || h.is_nan() || l > h || *l == f64::INFINITY || *h == f64::NEG_INFINITY {
                        return Err(Error::InvalidInput("box requires lo ≤ hi componentwise".into()));
                    }
                }
            }
            ConvexSet::Polyhedron { a, b } => {
                check_dim(a.len(), b.len())?;
                let n = a.first().map(|r| r.len()).unwrap_or(0);
                if n == 0 {
                    return Err(Error::InvalidInput(
                        "polyhedron needs at least one row of positive width".into(),
                    ));
                }
                for r in a {
                    check_dim(n, r.len())?;
                }
                if a.iter().flatten().chain(b).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("polyhedron data must be finite".into()));
                }
                let mut lp = LinearProgram::free(vec![0.0; n]);
                for (r, &bi) in a.iter().zip(b) {
                    lp = lp.leq(r.clone(), bi);
                }
                match solve_lp(&lp)?.status {
                    LpStatus::Optimal => {}
                    LpStatus::Infeasible => return Err(Error::InvalidInput("polyhedron is empty".into())),
                    _ => return Err(Error::NumericalFailure("polyhedron feasibility LP failed".into())),
                }
            }
            ConvexSet::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::InvalidInput("ball has dimension 0".into()));
                }
                if !(radius.is_finite() && *radius >= 0.0) || center.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(
                        "ball requires a finite center and radius ≥ 0".into(),
                    ));
                }
            }
            ConvexSet::Singleton { p } => {
                if p.is_empty() || p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("singleton needs a finite point".into()));
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection of raw coordinates.
    pub fn project(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), p.len())?;
        Ok(match self {
            ConvexSet::Box { lo, hi } => p
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            ConvexSet::Polyhedron { a, b } => project_polyhedron(p, a, b)?,
            ConvexSet::Ball { center, radius } => {
                let d = sub(p, center);
                let r = norm2(&d);
                if r <= *radius {
                    p.to_vec()
                } else {
                    let s = radius / r;
                    center.iter().zip(&d).map(|(c, di)| c + s * di).collect()
                }
            }
            ConvexSet::Singleton { p: q } => q.clone(),
        })
    }

    /// Euclidean distance of raw coordinates.
    pub fn distance(&self, p: &[f64]) -> Result<f64> {
        match self {
            ConvexSet::Box { lo, hi } => {
                check_dim(lo.len(), p.len())?;
                Ok(p.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(v, (l, h))| {
                        let e = if v < l {
                            l - v
                        } else if v > h {
                            v - h
                        } else {
                            0.0
                        };
                        e * e
                    })
                    .sum::<f64>()
                    .sqrt())
            }
            ConvexSet::Ball { center, radius } => {
                check_dim(center.len(), p.len())?;
                Ok((norm2(&sub(p, center)) - radius).max(0.0))
            }
            _ => Ok(norm2(&sub(p, &self.project(p)?))),
        }
    }

    /// Row description `{z : R z ≤ s}` for Box, Polyhedron and Singleton.
    pub fn halfspaces(&self) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        let n = self.dim();
        match self {
            ConvexSet::Box { lo, hi } => {
                let mut rows = Vec::new();
                let mut rhs = Vec::new();
                for i in 0..n {
                    if hi[i].is_finite() {
                        rows.push(crate::linalg::unit_axis(n, i, 1.0));
                        rhs.push(hi[i]);
                    }
                    if lo[i].is_finite() {
                        rows.push(crate::linalg::unit_axis(n, i, -1.0));
                        rhs.push(-lo[i]);
                    }
                }
                Some((rows, rhs))
            }
            ConvexSet::Polyhedron { a, b } => Some((a.clone(), b.clone())),
            ConvexSet::Singleton { p } => {
                let mut rows = Vec::new();
                let mut rhs = Vec::new();
                for i in 0..n {
                    rows.push(crate::linalg::unit_axis(n, i, 1.0));
                    rhs.push(p[i]);
                    rows.push(crate::linalg::unit_axis(n, i, -1.0));
                    rhs.push(-p[i]);
                }
                Some((rows, rhs))
            }
            ConvexSet::Ball { .. } => None,
        }
    }

    /// Rows of the description active at `p`.
    fn active_rows(&self, p: &[f64]) -> Vec<Vec<f64>> {
        match self.halfspaces() {
            Some((rows, rhs)) => rows
                .into_iter()
                .zip(rhs)
                .filter(|(r, s)| (dot(r, p) - s).abs() <= active_tol(*s))
                .map(|(r, _)| r)
                .collect(),
            None => Vec::new(),
        }
    }

    fn require_member(&self, p: &[f64]) -> Result<()> {
        check_dim(self.dim(), p.len())?;
        let d = self.distance(p)?;
        if d <= MEMBERSHIP_TOL {
            Ok(())
        } else {
            Err(Error::NotInSet { distance: d })
        }
    }
}

/// Distance from `p` to `k` in `p`'s norm, and a nearest point.
pub fn dist_to_convex(p: &Point, k: &ConvexSet) -> Result<(f64, Point)> {
    check_dim(k.dim(), p.dim())?;
    let x = p.as_slice();
    let proj = match (p.norm_kind, k) {
        (NormKind::Euclidean, _)
        | (NormKind::L1, ConvexSet::Box { .. })
        | (NormKind::L1, ConvexSet::Singleton { .. }) => k.project(x)?,
        (NormKind::L1, ConvexSet::Polyhedron { a, b }) => l1_nearest_feasible(x, a, b)?.ok_or(Error::Infeasible)?,
        (NormKind::L1, ConvexSet::Ball { .. }) => {
            return Err(Error::Unsupported("ℓ¹ distance to a Euclidean ball".into()))
        }
    };
    let d = match p.norm_kind {
        NormKind::Euclidean => norm2(&sub(x, &proj)),
        NormKind::L1 => norm1(&sub(x, &proj)),
    };
    Ok((
        d,
        Point {
            coords: proj,
            norm_kind: p.norm_kind,
        },
    ))
}

/// Contingent cone `T_K(p)`; always returned in inequality form (or `WholeSpace`/`Zero`).
pub fn tangent_cone(k: &ConvexSet, p: &Point) -> Result<Cone> {
    let x = p.as_slice();
    k.require_member(x)?;
    let dim = k.dim();
    Ok(match k {
        ConvexSet::Singleton { .. } => Cone::Zero { dim },
        ConvexSet::Ball { center, radius } => {
            if *radius == 0.0 {
                Cone::Zero { dim }
            } else {
                let d = sub(x, center);
                if norm2(&d) >= radius - active_tol(*radius) {
                    Cone::Inequality {
                        dim,
                        rows: vec![scale(&d, 1.0 / norm2(&d))],
                    }
                } else {
                    Cone::WholeSpace { dim }
                }
            }
        }
        _ => {
            let rows = k.active_rows(x);
            if rows.is_empty() {
                Cone::WholeSpace { dim }
            } else {
                Cone::Inequality { dim, rows }
            }
        }
    })
}

/// Normal cone `N_K(p)`, the polar of [`tangent_cone`]; returned in generator form.
pub fn normal_cone(k: &ConvexSet, p: &Point) -> Result<Cone> {
    let t = tangent_cone(k, p)?;
    Ok(match t {
        Cone::Inequality { dim, rows } => Cone::Generated { dim, generators: rows },
        other => other.polar(),
    })
}
