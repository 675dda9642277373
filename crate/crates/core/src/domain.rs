//! Per-domain model fitting and the fitted-mixture container.
//!
//! Each arriving domain is summarized by class prototypes (per-class mean
//! embeddings), a Gaussian over each class's sample-to-prototype distances,
//! unit-norm class heads for the cosine classifier, and per-coordinate
//! variances for the Mahalanobis ablation. Domains are fitted independently
//! and a `FittedMixture` is append-only: adding domain `s` never mutates
//! domains `< s`.

use crate::config::InferenceConfig;
use crate::distance::l2_distance;
use crate::embedding::{EmbeddingVector, LabeledSample};
use crate::error::{Error, Result};

/// Gaussian over a class's training distances to its prototype.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGaussian {
    /// Mean distance.
    pub mu: f64,
    /// Standard deviation, never below the configured sigma floor.
    pub sigma: f64,
    /// Number of distances the fit saw.
    pub n: usize,
}

/// Everything retained about one domain after fitting. Raw samples are
/// discarded; only these statistics persist.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainModel {
    pub domain_id: usize,
    /// One prototype per class (or per centroid in the k-means mode).
    pub prototypes: Vec<EmbeddingVector>,
    /// Distance Gaussian per prototype, aligned with `prototypes`.
    pub gaussians: Vec<ClassGaussian>,
    /// Unit-norm reference vectors for the cosine classifier, one per class.
    /// `None` for centroid-only (k-means) models, which can route but not
    /// classify. Callers may substitute externally computed heads.
    pub class_heads: Option<Vec<EmbeddingVector>>,
    /// Per-coordinate sample variance per prototype, floored at
    /// sigma_floor²; used by the diagonal-Mahalanobis kernel.
    pub diag_variance: Vec<Vec<f64>>,
}

impl DomainModel {
    pub fn dimension(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn num_prototypes(&self) -> usize {
        self.prototypes.len()
    }

    /// Check internal consistency against the mixture-wide dimension and
    /// class count. Centroid-only models may carry any number of
    /// prototypes; models with class heads must carry exactly one prototype
    /// and head per class.
    pub fn validate(&self, dimension: usize, num_classes: usize) -> Result<()> {
        if self.prototypes.is_empty() {
            return Err(Error::EmptyClass);
        }
        let n = self.prototypes.len();
        if self.gaussians.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.gaussians.len(),
            });
        }
        if self.diag_variance.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.diag_variance.len(),
            });
        }
        for p in &self.prototypes {
            if p.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: p.len(),
                });
            }
        }
        for v in &self.diag_variance {
            if v.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: v.len(),
                });
            }
            if let Some((index, &value)) = v
                .iter()
                .enumerate()
                .find(|(_, x)| !(**x > 0.0 && x.is_finite()))
            {
                return Err(Error::NonPositiveVariance { index, value });
            }
        }
        for g in &self.gaussians {
            if !(g.sigma > 0.0 && g.sigma.is_finite()) {
                return Err(Error::NonPositiveSigma(g.sigma));
            }
            if g.n == 0 {
                return Err(Error::EmptyClass);
            }
        }
        if let Some(heads) = &self.class_heads {
            if heads.len() != num_classes || n != num_classes {
                return Err(Error::DimensionMismatch {
                    expected: num_classes,
                    actual: heads.len().min(n),
                });
            }
            for h in heads {
                if h.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        actual: h.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Replace the class heads, e.g. with externally computed reference
    /// vectors. The replacement must match the prototype count and
    /// dimension.
    pub fn set_class_heads(&mut self, heads: Vec<EmbeddingVector>) -> Result<()> {
        if heads.len() != self.prototypes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.prototypes.len(),
                actual: heads.len(),
            });
        }
        let dim = self.dimension();
        for h in &heads {
            if h.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: h.len(),
                });
            }
        }
        self.class_heads = Some(heads);
        Ok(())
    }
}

/// Ordered collection of fitted domains plus the shared configuration.
///
/// The domain list index always equals the model's `domain_id`; arrival
/// order is recorded but inference never weights by it.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedMixture {
    pub domains: Vec<DomainModel>,
    pub config: InferenceConfig,
    pub dimension: usize,
    pub num_classes: usize,
}

impl FittedMixture {
    pub fn new(dimension: usize, num_classes: usize, config: InferenceConfig) -> Result<Self> {
        config.validate()?;
        if dimension == 0 {
            return Err(Error::InvalidEmbedding {
                reason: "dimension must be at least 1",
            });
        }
        if num_classes == 0 {
            return Err(Error::InvalidConfig(
                "num_classes must be at least 1".into(),
            ));
        }
        Ok(Self {
            domains: Vec::new(),
            config,
            dimension,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    /// Append a fitted domain. Ids must arrive contiguously: the new
    /// model's `domain_id` has to equal the current domain count.
    pub fn push_domain(&mut self, model: DomainModel) -> Result<()> {
        let expected = self.domains.len();
        if model.domain_id < expected {
            return Err(Error::DuplicateDomain(model.domain_id));
        }
        if model.domain_id > expected {
            return Err(Error::NonContiguousDomain {
                expected,
                got: model.domain_id,
            });
        }
        model.validate(self.dimension, self.num_classes)?;
        self.domains.push(model);
        Ok(())
    }

    /// The mixture as it looked after `len` domains had been fitted.
    /// Valid because fitting is independent per domain.
    pub fn truncated(&self, len: usize) -> Result<FittedMixture> {
        if len == 0 || len > self.domains.len() {
            return Err(Error::IndexOutOfRange {
                what: "truncation length",
                value: len as i64,
                limit: self.domains.len(),
            });
        }
        Ok(FittedMixture {
            domains: self.domains[..len].to_vec(),
            config: self.config.clone(),
            dimension: self.dimension,
            num_classes: self.num_classes,
        })
    }
}

/// Coordinate-wise mean of the given embeddings.
pub fn compute_class_prototype(samples: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = samples.first().ok_or(Error::EmptyClass)?;
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(s.as_slice()) {
            *a += v;
        }
    }
    let n = samples.len() as f64;
    EmbeddingVector::new(acc.into_iter().map(|a| a / n).collect())
}

/// Fit a Gaussian to a set of distances: mean, and Bessel-corrected sample
/// standard deviation floored at `sigma_floor`. A single distance has no
/// spread and gets the floor directly.
pub fn fit_class_gaussian(distances: &[f64], sigma_floor: f64) -> Result<ClassGaussian> {
    if distances.is_empty() {
        return Err(Error::EmptyClass);
    }
    if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
        return Err(Error::NonPositiveSigma(sigma_floor));
    }
    let n = distances.len();
    let mu = distances.iter().sum::<f64>() / n as f64;
    let sigma = if n == 1 {
        sigma_floor
    } else {
        let ss: f64 = distances.iter().map(|d| (d - mu) * (d - mu)).sum();
        (ss / (n - 1) as f64).sqrt().max(sigma_floor)
    };
    Ok(ClassGaussian { mu, sigma, n })
}

fn per_coordinate_variance(
    samples: &[&EmbeddingVector],
    mean: &EmbeddingVector,
    sigma_floor: f64,
) -> Vec<f64> {
    let dim = mean.len();
    let floor = sigma_floor * sigma_floor;
    if samples.len() < 2 {
        return vec![floor; dim];
    }
    let mut acc = vec![0.0f64; dim];
    for s in samples {
        for ((a, v), m) in acc.iter_mut().zip(s.as_slice()).zip(mean.as_slice()) {
            let d = v - m;
            *a += d * d;
        }
    }
    let denom = (samples.len() - 1) as f64;
    acc.into_iter().map(|a| (a / denom).max(floor)).collect()
}

/// Fit one domain from its full labeled batch.
///
/// All samples must carry the same domain id and every class in
/// `[0, num_classes)` needs at least one sample. Per class this computes the
/// prototype, the L2 distances of the class's samples to it (the ablation
/// weighting kernels never change this distance), the distance Gaussian,
/// the per-coordinate variances, and a unit-norm head vector.
///
/// When `config.normalize_embeddings` is set, samples are projected to unit
/// norm before any statistic is computed.
pub fn fit_domain(
    samples: &[LabeledSample],
    num_classes: usize,
    config: &InferenceConfig,
) -> Result<DomainModel> {
    config.validate()?;
    let first = samples.first().ok_or(Error::EmptyClass)?;
    let domain_id = first.domain_id.ok_or(Error::MixedDomains {
        expected: 0,
        found: None,
    })?;
    let dim = first.embedding.len();

    let mut by_class: Vec<Vec<EmbeddingVector>> = vec![Vec::new(); num_classes];
    for s in samples {
        if s.domain_id != Some(domain_id) {
            return Err(Error::MixedDomains {
                expected: domain_id,
                found: s.domain_id,
            });
        }
        if s.embedding.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.embedding.len(),
            });
        }
        if s.class_id >= num_classes {
            return Err(Error::IndexOutOfRange {
                what: "class id",
                value: s.class_id as i64,
                limit: num_classes,
            });
        }
        let embedding = if config.normalize_embeddings {
            s.embedding.normalized()?
        } else {
            s.embedding.clone()
        };
        by_class[s.class_id].push(embedding);
    }

    let mut prototypes = Vec::with_capacity(num_classes);
    let mut gaussians = Vec::with_capacity(num_classes);
    let mut heads = Vec::with_capacity(num_classes);
    let mut diag_variance = Vec::with_capacity(num_classes);
    for (class_id, class_samples) in by_class.iter().enumerate() {
        if class_samples.is_empty() {
            return Err(Error::MissingClass(class_id));
        }
        let prototype = compute_class_prototype(class_samples)?;
        let distances: Vec<f64> = class_samples
            .iter()
            .map(|s| l2_distance(s, &prototype))
            .collect::<Result<_>>()?;
        gaussians.push(fit_class_gaussian(&distances, config.sigma_floor)?);
        heads.push(prototype.normalized()?);
        let refs: Vec<&EmbeddingVector> = class_samples.iter().collect();
        diag_variance.push(per_coordinate_variance(
            &refs,
            &prototype,
            config.sigma_floor,
        ));
        prototypes.push(prototype);
    }

    Ok(DomainModel {
        domain_id,
        prototypes,
        gaussians,
        class_heads: Some(heads),
        diag_variance,
    })
}
