//! Builtin smooth maps with analytic Jacobians.

use crate::error::{check_dim, Error, Result};
use crate::linalg::rows_to_matrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A smooth map `Rⁿ → Rᵐ` from the builtin registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", rename_all = "kebab-case")]
pub enum SmoothFn {
    Identity {
        dim: usize,
    },
    /// `x ↦ x²` on `R`.
    Square,
    /// `(x₁, x₂) ↦ (x₁ − x₂)³`.
    CubicDifference,
    /// `x ↦ A x`.
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    /// Componentwise `x ↦ s·sin(x)`.
    ScaledSin {
        scale: f64,
        dim: usize,
    },
    Zero {
        in_dim: usize,
        out_dim: usize,
    },
    /// Pointwise sum of maps with matching dimensions.
    Sum {
        terms: Vec<SmoothFn>,
    },
    /// `x ↦ c·f(x)`.
    Scaled {
        factor: f64,
        inner: Box<SmoothFn>,
    },
}

impl SmoothFn {
    pub fn in_dim(&self) -> usize {
        match self {
            SmoothFn::Identity { dim } | SmoothFn::ScaledSin { dim, .. } => *dim,
            SmoothFn::Square => 1,
            SmoothFn::CubicDifference => 2,
            SmoothFn::Linear { matrix } => matrix.first().map(|r| r.len()).unwrap_or(0),
            SmoothFn::Zero { in_dim, .. } => *in_dim,
            SmoothFn::Sum { terms } => terms.first().map(|t| t.in_dim()).unwrap_or(0),
            SmoothFn::Scaled { inner, .. } => inner.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            SmoothFn::Identity { dim } | SmoothFn::ScaledSin { dim, .. } => *dim,
            SmoothFn::Square | SmoothFn::CubicDifference => 1,
            SmoothFn::Linear { matrix } => matrix.len(),
            SmoothFn::Zero { out_dim, .. } => *out_dim,
            SmoothFn::Sum { terms } => terms.first().map(|t| t.out_dim()).unwrap_or(0),
            SmoothFn::Scaled { inner, .. } => inner.out_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SmoothFn::Identity { dim } | SmoothFn::ScaledSin { dim, .. } if *dim == 0 => {
                Err(Error::InvalidInput("map dimension must be positive".into()))
            }
            SmoothFn::ScaledSin { scale, .. } if !scale.is_finite() => {
                Err(Error::InvalidInput("scale must be finite".into()))
            }
            SmoothFn::Linear { matrix } => {
                let n = self.in_dim();
                if matrix.is_empty() || n == 0 {
                    return Err(Error::InvalidInput("matrix must be nonempty".into()));
                }
                for r in matrix {
                    check_dim(n, r.len())?;
                }
                if matrix.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("matrix entries must be finite".into()));
                }
                Ok(())
            }
            SmoothFn::Zero { in_dim, out_dim } if *in_dim == 0 || *out_dim == 0 => {
                Err(Error::InvalidInput("map dimension must be positive".into()))
            }
            SmoothFn::Sum { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidInput("sum needs at least one term".into()));
                }
                for t in terms {
                    t.validate()?;
                    check_dim(self.in_dim(), t.in_dim())?;
                    check_dim(self.out_dim(), t.out_dim())?;
                }
                Ok(())
            }
            SmoothFn::Scaled { factor, inner } => {
                if !factor.is_finite() {
                    return Err(Error::InvalidInput("factor must be finite".into()));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SmoothFn::Identity { .. } => x.to_vec(),
            SmoothFn::Square => vec![x[0] * x[0]],
            SmoothFn::CubicDifference => vec![(x[0] - x[1]).powi(3)],
            SmoothFn::Linear { matrix } => matrix.iter().map(|r| crate::linalg::dot(r, x)).collect(),
            SmoothFn::ScaledSin { scale, .. } => x.iter().map(|v| scale * v.sin()).collect(),
            SmoothFn::Zero { out_dim, .. } => vec![0.0; *out_dim],
            SmoothFn::Sum { terms } => {
                let mut out = vec![0.0; self.out_dim()];
                for t in terms {
                    for (o, v) in out.iter_mut().zip(t.eval(x)) {
                        *o += v;
                    }
                }
                out
            }
            SmoothFn::Scaled { factor, inner } => inner.eval(x).into_iter().map(|v| factor * v).collect(),
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (m, n) = (self.out_dim(), self.in_dim());
        match self {
            SmoothFn::Identity { dim } => DMatrix::identity(*dim, *dim),
            SmoothFn::Square => DMatrix::from_element(1, 1, 2.0 * x[0]),
            SmoothFn::CubicDifference => {
                let d = 3.0 * (x[0] - x[1]).powi(2);
                DMatrix::from_row_slice(1, 2, &[d, -d])
            }
            SmoothFn::Linear { matrix } => rows_to_matrix(matrix, n),
            SmoothFn::ScaledSin { scale, dim } => {
                DMatrix::from_fn(*dim, *dim, |i, j| if i == j { scale * x[i].cos() } else { 0.0 })
            }
            SmoothFn::Zero { .. } => DMatrix::zeros(m, n),
            SmoothFn::Sum { terms } => {
                let mut j = DMatrix::zeros(m, n);
                for t in terms {
                    j += t.jacobian(x);
                }
                j
            }
            SmoothFn::Scaled { factor, inner } => inner.jacobian(x) * *factor,
        }
    }

    /// `self + other`, flattening nested sums.
    pub fn plus(&self, other: &SmoothFn) -> SmoothFn {
        let mut terms = Vec::new();
        for f in [self, other] {
            match f {
                SmoothFn::Sum { terms: t } => terms.extend(t.iter().cloned()),
                SmoothFn::Zero { .. } if !terms.is_empty() => {}
                g => terms.push(g.clone()),
            }
        }
        if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            SmoothFn::Sum { terms }
        }
    }

    pub fn scaled(&self, factor: f64) -> SmoothFn {
        SmoothFn::Scaled {
            factor,
            inner: Box::new(self.clone()),
        }
    }

    /// Compares the analytic Jacobian with central differences at seeded points of `[lo, hi]`.
    ///
    /// Infinite bounds are clipped to `±10`. Fails when any entry differs by more
    /// than `1e−5·(1 + |J|)`.
    pub fn check_jacobian(&self, lo: &[f64], hi: &[f64], seed: u64) -> Result<()> {
        let n = self.in_dim();
        check_dim(n, lo.len())?;
        check_dim(n, hi.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo: Vec<f64> = lo.iter().map(|v| v.max(-10.0)).collect();
        let hi: Vec<f64> = hi.iter().map(|v| v.min(10.0)).collect();
        for _ in 0..8 {
            let x: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| if h > l { l + (h - l) * rng.random::<f64>() } else { *l })
                .collect();
            let j = self.jacobian(&x);
            let jn = fd_jacobian(|z| self.eval(z), &x, self.out_dim());
            let scale = 1.0 + j.amax();
            let err = (&j - &jn).amax();
            if err > 1e-5 * scale {
                return Err(Error::InvalidInput(format!(
                    "Jacobian disagrees with finite differences by {err:e} at {x:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Central-difference Jacobian with step `1e−6·(1 + |xⱼ|)`.
pub fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], m: usize) -> DMatrix<f64> {
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    for k in 0..n {
        let h = 1e-6 * (1.0 + x[k].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let fp = f(&xp);
        let fm = f(&xm);
        for i in 0..m {
            j[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    j
}
