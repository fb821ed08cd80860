//! Feature-space primitives: dense vectors, the nonnegative unit sphere, and
//! the match score between a user estimate and a content vector.

use serde::{Deserialize, Serialize};

use crate::error::{C3bvError, Result};

/// Tolerance for accepting an input as already unit-norm.
pub const UNIT_TOL: f64 = 1e-9;

/// Norm floor below which a vector is considered degenerate for projection.
pub const NORM_FLOOR: f64 = 1e-12;

/// A dense feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn zeros(d: usize) -> Self {
        Vector(vec![0.0; d])
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(C3bvError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A content vector: entrywise nonnegative with unit Euclidean norm.
///
/// Construction validates and renormalizes, so every value of this type
/// satisfies the constraint to within floating-point roundoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitNonnegVec(Vec<f64>);

impl UnitNonnegVec {
    /// Validates nonnegativity and norm ~ 1, renormalizing to exactly unit
    /// norm. Rejects entries below zero, non-finite entries, and norms that
    /// differ from 1 by more than `UNIT_TOL` relative to `NORM_FLOOR` scale.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(C3bvError::InvalidParameter(
                "content vector must have positive dimension".into(),
            ));
        }
        for (i, &x) in v.iter().enumerate() {
            if !x.is_finite() {
                return Err(C3bvError::NonFinite {
                    context: format!("content vector entry {i}"),
                });
            }
            if x < 0.0 {
                return Err(C3bvError::InvalidParameter(format!(
                    "content vector entry {i} is negative ({x})"
                )));
            }
        }
        let n = norm(&v);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(C3bvError::InvalidParameter(format!(
                "content vector norm is {n}, expected 1"
            )));
        }
        let mut v = v;
        for x in &mut v {
            *x /= n;
        }
        Ok(UnitNonnegVec(v))
    }

    /// Projects an arbitrary vector onto the nonnegative unit sphere:
    /// clamp negatives to zero, then normalize. Degenerate inputs (all
    /// entries nonpositive or norm below `NORM_FLOOR`) are an error.
    pub fn project(v: &[f64]) -> Result<Self> {
        let mut w: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
        if w.iter().any(|x| !x.is_finite()) {
            return Err(C3bvError::NonFinite {
                context: "projection input".into(),
            });
        }
        let n = norm(&w);
        if n < NORM_FLOOR {
            return Err(C3bvError::DegenerateProjection);
        }
        for x in &mut w {
            *x /= n;
        }
        Ok(UnitNonnegVec(w))
    }

    /// Like [`project`](Self::project) but falls back to `previous` when the
    /// clamped vector is degenerate. This is the update rule used by the
    /// better-response dynamics, which must never lose a creator.
    pub fn project_or(v: &[f64], previous: &UnitNonnegVec) -> UnitNonnegVec {
        match Self::project(v) {
            Ok(p) => p,
            Err(_) => previous.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }
}

impl TryFrom<Vec<f64>> for UnitNonnegVec {
    type Error = C3bvError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitNonnegVec::new(v)
    }
}

impl From<UnitNonnegVec> for Vec<f64> {
    fn from(v: UnitNonnegVec) -> Vec<f64> {
        v.0
    }
}

/// Match score between two feature vectors: the plain inner product.
/// Symmetric and bilinear; may be negative for unconstrained estimates.
pub fn match_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(C3bvError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dot(a, b))
}
