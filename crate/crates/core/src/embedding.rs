//! Embedding vectors and labeled samples.
//!
//! Feature extraction happens upstream; this library only ever sees dense
//! real-valued vectors of a fixed dimension `L` together with integer domain
//! and class labels.

use std::ops::Index;

use crate::error::{Error, Result};

/// Norm below which a vector is treated as zero (and rejected by operations
/// that need a direction).
pub const MIN_NORM: f64 = 1e-12;

/// A dense feature vector.
///
/// Construction checks that the vector is non-empty and every element is
/// finite; all vectors in one model must additionally share the same length,
/// which is enforced wherever vectors meet.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding {
                reason: "vector must have at least one element",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding {
                reason: "all elements must be finite",
            });
        }
        Ok(Self(values))
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

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-L2 projection of this vector.
    pub fn normalized(&self) -> Result<EmbeddingVector> {
        let n = self.norm();
        if n < MIN_NORM {
            return Err(Error::ZeroNormVector);
        }
        Ok(EmbeddingVector(self.0.iter().map(|v| v / n).collect()))
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for EmbeddingVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One sample: an embedding plus its domain and class labels.
///
/// `domain_id` is `None` for samples whose domain is unknown (pure test
/// data; written as `-1` in embedding files).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub embedding: EmbeddingVector,
    pub domain_id: Option<usize>,
    pub class_id: usize,
}

impl LabeledSample {
    pub fn new(embedding: EmbeddingVector, domain_id: Option<usize>, class_id: usize) -> Self {
        Self {
            embedding,
            domain_id,
            class_id,
        }
    }
}
