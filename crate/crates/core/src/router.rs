//! Domain routing: nearest-prototype selection and the distribution gate.
//!
//! A test embedding is assigned the domain whose closest prototype is
//! nearest (all argmins break ties to the lowest index). The gate then
//! compares the routed distance against the Gaussian fitted on that
//! domain/class's training distances: the sample counts as in-distribution
//! when the CDF value is at most the configured threshold `q`, boundary
//! included.

use crate::distance::l2_distance;
use crate::domain::{DomainModel, FittedMixture};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

/// Nearest-prototype result per domain, before the gate runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSelection {
    /// Minimum prototype distance per domain.
    pub per_domain_delta: Vec<f64>,
    /// Class attaining that minimum per domain.
    pub per_domain_nearest_class: Vec<usize>,
    /// Argmin over `per_domain_delta`, lowest index on ties.
    pub selected_domain: usize,
}

/// Full routing outcome: domain selection plus the gate decision.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    pub per_domain_delta: Vec<f64>,
    pub per_domain_nearest_class: Vec<usize>,
    pub selected_domain: usize,
    /// CDF of the routed distance under the selected domain/class Gaussian.
    pub cdf_value: f64,
    /// `cdf_value <= q`.
    pub is_in_distribution: bool,
}

/// Minimum L2 distance from `embedding` to any prototype of `domain`, and
/// the class attaining it (lowest class id on ties).
pub fn delta(embedding: &EmbeddingVector, domain: &DomainModel) -> Result<(f64, usize)> {
    let mut best = f64::INFINITY;
    let mut best_class = 0usize;
    for (class_id, prototype) in domain.prototypes.iter().enumerate() {
        let d = l2_distance(embedding, prototype)?;
        if d < best {
            best = d;
            best_class = class_id;
        }
    }
    Ok((best, best_class))
}

fn ingested(embedding: &EmbeddingVector, mixture: &FittedMixture) -> Result<EmbeddingVector> {
    if mixture.config.normalize_embeddings {
        embedding.normalized()
    } else {
        Ok(embedding.clone())
    }
}

/// Evaluate `delta` against every fitted domain and pick the argmin.
pub fn select_domain(
    embedding: &EmbeddingVector,
    mixture: &FittedMixture,
) -> Result<DomainSelection> {
    if mixture.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let z = ingested(embedding, mixture)?;
    let mut per_domain_delta = Vec::with_capacity(mixture.len());
    let mut per_domain_nearest_class = Vec::with_capacity(mixture.len());
    let mut selected = 0usize;
    let mut best = f64::INFINITY;
    for (s, domain) in mixture.domains.iter().enumerate() {
        let (d, class) = delta(&z, domain)?;
        if d < best {
            best = d;
            selected = s;
        }
        per_domain_delta.push(d);
        per_domain_nearest_class.push(class);
    }
    Ok(DomainSelection {
        per_domain_delta,
        per_domain_nearest_class,
        selected_domain: selected,
    })
}

/// CDF of N(mu, sigma²) at `x`, computed as erfc(-z/√2)/2 for full tail
/// precision. Monotone non-decreasing in `x`.
pub fn gaussian_cdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let z = (x - mu) / sigma;
    Ok(0.5 * libm::erfc(-z / std::f64::consts::SQRT_2))
}

/// Route an embedding: select the nearest domain, then gate its distance
/// against that domain's nearest-class Gaussian.
pub fn route(embedding: &EmbeddingVector, mixture: &FittedMixture) -> Result<RoutingDecision> {
    let selection = select_domain(embedding, mixture)?;
    let s = selection.selected_domain;
    let k = selection.per_domain_nearest_class[s];
    let gaussian = &mixture.domains[s].gaussians[k];
    let cdf_value = gaussian_cdf(selection.per_domain_delta[s], gaussian.mu, gaussian.sigma)?;
    Ok(RoutingDecision {
        per_domain_delta: selection.per_domain_delta,
        per_domain_nearest_class: selection.per_domain_nearest_class,
        selected_domain: s,
        cdf_value,
        is_in_distribution: cdf_value <= mixture.config.q,
    })
}
