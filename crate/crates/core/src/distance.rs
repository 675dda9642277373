//! Distance and similarity kernels over embedding vectors.
//!
//! All kernels are pure functions on immutable inputs and safe for
//! unrestricted concurrent use. Arithmetic is plain f64.

use crate::embedding::{EmbeddingVector, MIN_NORM};
use crate::error::{Error, Result};

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Cosine similarity a·b / (‖a‖‖b‖), clamped to [-1, 1] against rounding.
///
/// Either operand having norm below `MIN_NORM` is an error: a zero vector
/// has no direction, and silently returning 0 would hide degenerate fits.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a, b)?;
    let na = a.norm();
    let nb = b.norm();
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(Error::ZeroNormVector);
    }
    let dot: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Euclidean distance ‖a − b‖₂.
pub fn l2_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Manhattan distance Σ|a_d − b_d|.
pub fn l1_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Diagonal-covariance Mahalanobis distance sqrt(Σ (a_d − mean_d)² / var_d).
///
/// Every variance must be strictly positive; fitted models guarantee
/// var_d ≥ sigma_floor².
pub fn mahalanobis_diag_distance(
    a: &EmbeddingVector,
    mean: &EmbeddingVector,
    var_diag: &[f64],
) -> Result<f64> {
    check_dims(a, mean)?;
    if var_diag.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: var_diag.len(),
        });
    }
    if let Some((index, &value)) = var_diag
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::NonPositiveVariance { index, value });
    }
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(mean.as_slice())
        .zip(var_diag)
        .map(|((x, m), v)| {
            let d = x - m;
            d * d / v
        })
        .sum();
    Ok(sum.sqrt())
}
