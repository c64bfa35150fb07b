//! Fixed-dimension real vectors and the similarity math built on them.
//!
//! Cosine similarity uses plain left-to-right accumulation so scores are
//! reproducible bit-for-bit on replay, and results are clamped to [-1, 1]
//! so rounding never leaks out-of-range scores downstream.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::math;

/// A finite real vector. Construction rejects NaN and infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VectorError {
    #[error("non-finite component at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroNorm,
    #[error("empty vector")]
    Empty,
}

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self, VectorError> {
        if components.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Vector(components))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for c in &self.0 {
            acc += c * c;
        }
        math::sqrt(acc)
    }

    /// Component-wise scaling. Panics in debug builds if the factor is not
    /// finite; callers only use finite scalars.
    pub fn scaled(&self, factor: f64) -> Vector {
        debug_assert!(factor.is_finite());
        Vector(self.0.iter().map(|c| c * factor).collect())
    }

    /// Rounds every component to 9 significant digits, the precision the
    /// persisted formats carry, so a value that has been through this is
    /// reproduced exactly by a save/load cycle.
    pub fn quantized(&self) -> Vector {
        Vector(self.0.iter().map(|c| quantize_sig9(*c)).collect())
    }
}

impl Serialize for Vector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let components = Vec::<f64>::deserialize(deserializer)?;
        Vector::new(components).map_err(serde::de::Error::custom)
    }
}

/// Dot product over the normalized pair, clamped to [-1, 1].
pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64, VectorError> {
    if a.len() != b.len() {
        return Err(VectorError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(VectorError::ZeroNorm);
    }
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): one rounding fewer,
    // and cos(a, a) comes out exactly 1.
    Ok((dot / math::sqrt(na * nb)).clamp(-1.0, 1.0))
}

/// Scales to unit L2 norm, preserving direction.
pub fn l2_normalize(a: &Vector) -> Result<Vector, VectorError> {
    let norm = a.norm();
    if norm == 0.0 {
        return Err(VectorError::ZeroNorm);
    }
    Ok(Vector(a.as_slice().iter().map(|c| c / norm).collect()))
}

/// Canonical 9-significant-digit rendering used by the persisted formats.
pub fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Rounds to the nearest 9-significant-digit decimal.
pub fn quantize_sig9(x: f64) -> f64 {
    format_sig9(x).parse().expect("sig9 rendering reparses")
}
