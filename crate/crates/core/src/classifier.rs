//! Per-domain class posteriors via a cosine-similarity softmax.

use crate::distance::cosine_similarity;
use crate::domain::DomainModel;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::numeric::softmax;

/// Probability distribution over the model's classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub probs: Vec<f64>,
}

impl Posterior {
    /// Index of the largest probability, lowest class id on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > best_p {
                best_p = p;
                best = i;
            }
        }
        best
    }
}

/// Class posterior of one domain: softmax over cosine similarities between
/// the embedding and the domain's class heads, scaled by `1/temperature`.
/// Temperature 1.0 reproduces the plain cosine softmax.
///
/// The softmax runs in the log domain with max-subtraction, so adding a
/// constant to every similarity cannot change the result and extreme scores
/// cannot underflow.
pub fn per_domain_posterior(
    embedding: &EmbeddingVector,
    domain: &DomainModel,
    temperature: f64,
) -> Result<Posterior> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let heads = domain
        .class_heads
        .as_ref()
        .ok_or(Error::MissingClassHeads {
            domain_id: domain.domain_id,
        })?;
    let mut scores = Vec::with_capacity(heads.len());
    for head in heads {
        scores.push(cosine_similarity(embedding, head)? / temperature);
    }
    let probs = softmax(&scores).ok_or(Error::Degenerate("non-finite classifier scores"))?;
    Ok(Posterior { probs })
}
