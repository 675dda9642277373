//! Seeded k-means clustering (k-means++ initialization, Lloyd iterations)
//! and the centroid-based domain fitting mode.
//!
//! The centroid mode mirrors the key/value routing alternative: a domain is
//! represented by unlabeled k-means centroids instead of class prototypes.
//! Such models route but cannot classify, so they carry no class heads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::InferenceConfig;
use crate::domain::{fit_class_gaussian, DomainModel};
use crate::embedding::{EmbeddingVector, LabeledSample};
use crate::error::{Error, Result};

fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Nearest centroid index for a point, ties broken to the lowest index.
fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_l2(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// k-means++ seeding: first centroid uniform, each subsequent centroid drawn
/// with probability proportional to its squared distance to the nearest
/// already-chosen centroid.
fn kmeans_plusplus(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_l2(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all points coincide with existing centroids
            rng.random_range(0..n)
        };
        let c = points[idx].to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_l2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding, fully determined by `seed`.
///
/// Iterates until assignments stabilize or `max_iters` is reached. A
/// centroid whose cluster empties keeps its previous position. The output
/// is a Lloyd fixed point under that convention.
pub fn kmeans_prototypes(
    samples: &[EmbeddingVector],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Vec<EmbeddingVector>> {
    if k == 0 || max_iters == 0 {
        return Err(Error::InvalidConfig(
            "k and max_iters must be at least 1".into(),
        ));
    }
    if samples.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            got: samples.len(),
        });
    }
    let dim = samples[0].len();
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.len(),
            });
        }
    }
    let points: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plusplus(&points, k, &mut rng);
    let mut assignment: Vec<usize> = points
        .iter()
        .map(|p| nearest_centroid(p, &centroids))
        .collect();

    for _ in 0..max_iters {
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(*p) {
                *s += v;
            }
        }
        for (c, (sum, &count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if count > 0 {
                for (x, s) in c.iter_mut().zip(sum) {
                    *x = s / count as f64;
                }
            }
        }
        let next: Vec<usize> = points
            .iter()
            .map(|p| nearest_centroid(p, &centroids))
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    centroids
        .into_iter()
        .map(EmbeddingVector::new)
        .collect::<Result<Vec<_>>>()
}

/// Fit a domain in centroid mode: k-means centroids stand in for class
/// prototypes under synthetic ids, each with a distance Gaussian and
/// per-coordinate variances over its assigned samples. Class labels are
/// ignored and no class heads are produced (routing-only model).
pub fn fit_domain_kmeans(
    samples: &[LabeledSample],
    num_centroids: usize,
    seed: u64,
    max_iters: usize,
    config: &InferenceConfig,
) -> Result<DomainModel> {
    config.validate()?;
    let first = samples.first().ok_or(Error::EmptyClass)?;
    let domain_id = first.domain_id.ok_or(Error::MixedDomains {
        expected: 0,
        found: None,
    })?;
    let mut embeddings = Vec::with_capacity(samples.len());
    for s in samples {
        if s.domain_id != Some(domain_id) {
            return Err(Error::MixedDomains {
                expected: domain_id,
                found: s.domain_id,
            });
        }
        embeddings.push(if config.normalize_embeddings {
            s.embedding.normalized()?
        } else {
            s.embedding.clone()
        });
    }

    let centroids = kmeans_prototypes(&embeddings, num_centroids, seed, max_iters)?;
    let centroid_slices: Vec<Vec<f64>> = centroids.iter().map(|c| c.as_slice().to_vec()).collect();

    let mut clusters: Vec<Vec<&EmbeddingVector>> = vec![Vec::new(); num_centroids];
    for e in &embeddings {
        clusters[nearest_centroid(e.as_slice(), &centroid_slices)].push(e);
    }

    let dim = centroids[0].len();
    let floor = config.sigma_floor * config.sigma_floor;
    let mut gaussians = Vec::with_capacity(num_centroids);
    let mut diag_variance = Vec::with_capacity(num_centroids);
    for (centroid, members) in centroids.iter().zip(&clusters) {
        if members.is_empty() {
            return Err(Error::EmptyClass);
        }
        let distances: Vec<f64> = members
            .iter()
            .map(|m| squared_l2(m.as_slice(), centroid.as_slice()).sqrt())
            .collect();
        gaussians.push(fit_class_gaussian(&distances, config.sigma_floor)?);
        let var = if members.len() < 2 {
            vec![floor; dim]
        } else {
            let denom = (members.len() - 1) as f64;
            (0..dim)
                .map(|d| {
                    let ss: f64 = members
                        .iter()
                        .map(|m| {
                            let diff = m.as_slice()[d] - centroid[d];
                            diff * diff
                        })
                        .sum();
                    (ss / denom).max(floor)
                })
                .collect()
        };
        diag_variance.push(var);
    }

    Ok(DomainModel {
        domain_id,
        prototypes: centroids,
        gaussians,
        class_heads: None,
        diag_variance,
    })
}
