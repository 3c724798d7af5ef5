//! Dense `f64` vector arithmetic shared by every other module.
//!
//! All reductions accumulate left to right in index order so results are
//! bit-reproducible across runs and thread counts.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

/// Norm below which a vector carries no directional information.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Flattened model parameters or a pseudo-gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Returns `alpha * x + self`.
    pub fn axpy(&self, alpha: f64, x: &ParamVector) -> Result<ParamVector> {
        axpy(alpha, x, self)
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One client's submission for a round.
///
/// `slot` is the position within the round roster, not a persistent client
/// identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub round_index: usize,
    pub slot: usize,
    pub model: ParamVector,
    pub sample_count: usize,
}

impl ClientUpdate {
    pub fn new(round_index: usize, slot: usize, model: ParamVector, sample_count: usize) -> Self {
        assert!(sample_count >= 1, "sample_count must be positive");
        Self {
            round_index,
            slot,
            model,
            sample_count,
        }
    }
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in a {
        acc += v * v;
    }
    acc.sqrt()
}

fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn dot(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(dot_unchecked(&a.0, &b.0))
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
///
/// Returns 0 when either norm is below [`ZERO_NORM_EPS`].
pub fn cosine_similarity(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(cosine_unchecked(&a.0, &b.0))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
        return 0.0;
    }
    (dot_unchecked(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn euclidean_distance(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(distance_unchecked(&a.0, &b.0))
}

pub(crate) fn distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

/// `alpha * x + y`
pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    check_dim(y.dim(), x.dim())?;
    Ok(ParamVector(
        x.0.iter().zip(&y.0).map(|(xi, yi)| alpha * xi + yi).collect(),
    ))
}

pub fn scale(alpha: f64, x: &ParamVector) -> ParamVector {
    ParamVector(x.0.iter().map(|v| alpha * v).collect())
}

/// `a - b`
pub fn subtract(a: &ParamVector, b: &ParamVector) -> Result<ParamVector> {
    check_dim(a.dim(), b.dim())?;
    Ok(ParamVector(a.0.iter().zip(&b.0).map(|(x, y)| x - y).collect()))
}

pub fn add(a: &ParamVector, b: &ParamVector) -> Result<ParamVector> {
    check_dim(a.dim(), b.dim())?;
    Ok(ParamVector(a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect()))
}
