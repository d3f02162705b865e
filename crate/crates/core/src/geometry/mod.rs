//! Points, the product norm, convex sets with distances and cones, and directional cones.

mod cone;
mod convex;
mod direction;

pub use cone::Cone;
pub use convex::{dist_to_convex, normal_cone, tangent_cone, ConvexSet, MEMBERSHIP_TOL};
pub use direction::{directional_sequence, in_directional_cone, DirectionSpec, DirectionalSchedule};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::serde_ext::reals;
use serde::{Deserialize, Serialize};

/// Per-space norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    #[default]
    Euclidean,
    /// Sum of absolute values.
    L1,
}

impl NormKind {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::Euclidean => linalg::norm2(v),
            NormKind::L1 => linalg::norm1(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    #[serde(with = "reals")]
    pub coords: Vec<f64>,
    #[serde(default)]
    pub norm_kind: NormKind,
}

impl Point {
    /// Euclidean point. Panics on an empty coordinate vector.
    pub fn new(coords: Vec<f64>) -> Self {
        assert!(!coords.is_empty(), "points have dimension at least 1");
        Point {
            coords,
            norm_kind: NormKind::Euclidean,
        }
    }

    pub fn try_new(coords: Vec<f64>, norm_kind: NormKind) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("points have dimension at least 1".into()));
        }
        Ok(Point { coords, norm_kind })
    }

    pub fn with_norm(mut self, norm_kind: NormKind) -> Self {
        self.norm_kind = norm_kind;
        self
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm_kind.norm(&self.coords)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    fn same_kind(&self, coords: Vec<f64>) -> Point {
        Point {
            coords,
            norm_kind: self.norm_kind,
        }
    }

    pub fn sub(&self, other: &Point) -> Point {
        self.same_kind(linalg::sub(&self.coords, &other.coords))
    }

    pub fn add(&self, other: &Point) -> Point {
        self.same_kind(linalg::add(&self.coords, &other.coords))
    }

    pub fn scale(&self, s: f64) -> Point {
        self.same_kind(linalg::scale(&self.coords, s))
    }

    pub fn zeros(n: usize) -> Point {
        Point::new(vec![0.0; n])
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point::new(v)
    }
}

/// A pair `(x, y)` normed by `‖x‖ + ‖y‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPoint {
    pub x: Point,
    pub y: Point,
}

impl ProductPoint {
    pub fn new(x: Point, y: Point) -> Self {
        ProductPoint { x, y }
    }

    pub fn from_vecs(x: Vec<f64>, y: Vec<f64>) -> Self {
        ProductPoint::new(Point::new(x), Point::new(y))
    }

    pub fn norm(&self) -> f64 {
        product_norm(self)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.dim(), self.y.dim())
    }

    pub fn check_dims(&self, other: &ProductPoint) -> Result<()> {
        check_dim(self.x.dim(), other.x.dim())?;
        check_dim(self.y.dim(), other.y.dim())
    }

    pub fn sub(&self, other: &ProductPoint) -> ProductPoint {
        ProductPoint::new(self.x.sub(&other.x), self.y.sub(&other.y))
    }

    pub fn add(&self, other: &ProductPoint) -> ProductPoint {
        ProductPoint::new(self.x.add(&other.x), self.y.add(&other.y))
    }

    pub fn scale(&self, s: f64) -> ProductPoint {
        ProductPoint::new(self.x.scale(s), self.y.scale(s))
    }

    pub fn is_zero(&self) -> bool {
        self.x.coords.iter().chain(&self.y.coords).all(|&v| v == 0.0)
    }
}

/// `‖x‖ + ‖y‖`.
pub fn product_norm(p: &ProductPoint) -> f64 {
    p.x.norm() + p.y.norm()
}

/// Product norm of raw Euclidean components.
pub fn pair_norm(x: &[f64], y: &[f64]) -> f64 {
    linalg::norm2(x) + linalg::norm2(y)
}
