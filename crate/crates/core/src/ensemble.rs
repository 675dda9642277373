//! Mixture ensembling: distance-derived weights over fitted domains and the
//! full hybrid inference procedure.
//!
//! The default weighting treats the per-domain nearest-prototype distances
//! as draws from each domain's fitted distance Gaussian and normalizes the
//! densities: a Gaussian mixture on distances rather than on raw features.
//! Weights are always computed in the log domain with max-subtraction, since
//! raw density ratios underflow for far-away samples at 64-bit precision.

use crate::classifier::{per_domain_posterior, Posterior};
use crate::config::DistanceMode;
use crate::distance::{l1_distance, mahalanobis_diag_distance};
use crate::domain::FittedMixture;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::numeric::{normal_log_pdf, softmax};
use crate::router::{route, RoutingDecision};

/// Normalized weights over the fitted domains.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    pub weights: Vec<f64>,
    /// Kernel the weights came from.
    pub mode: DistanceMode,
    /// Set when every log-score was degenerate and the weights fell back to
    /// uniform. Cannot happen for fitted models (sigma is floored); kept as
    /// a diagnostic.
    pub uniform_fallback: bool,
}

/// Inference outcome: the class posterior, the routing trace, and, only
/// when the ensembling branch ran, the mixture weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub posterior: Posterior,
    pub routing: RoutingDecision,
    pub weights: Option<MixtureWeights>,
}

fn weights_from_scores(scores: &[f64], mode: DistanceMode) -> MixtureWeights {
    match softmax(scores) {
        Some(weights) => MixtureWeights {
            weights,
            mode,
            uniform_fallback: false,
        },
        None => MixtureWeights {
            weights: vec![1.0 / scores.len() as f64; scores.len()],
            mode,
            uniform_fallback: true,
        },
    }
}

fn check_routing_shape(routing: &RoutingDecision, mixture: &FittedMixture) -> Result<()> {
    if routing.per_domain_delta.len() != mixture.len()
        || routing.per_domain_nearest_class.len() != mixture.len()
    {
        return Err(Error::DimensionMismatch {
            expected: mixture.len(),
            actual: routing.per_domain_delta.len(),
        });
    }
    Ok(())
}

/// Gaussian-mixture weights on distances: w_s ∝ N(Δ_s; μ_s, σ_s) where
/// (μ_s, σ_s) is the Gaussian of domain s's nearest class for this sample.
pub fn mixture_weights_l2gmm(
    routing: &RoutingDecision,
    mixture: &FittedMixture,
) -> Result<MixtureWeights> {
    if mixture.is_empty() {
        return Err(Error::EmptyMixture);
    }
    check_routing_shape(routing, mixture)?;
    let mut log_pdfs = Vec::with_capacity(mixture.len());
    for (s, domain) in mixture.domains.iter().enumerate() {
        let class = routing.per_domain_nearest_class[s];
        let g = domain.gaussians.get(class).ok_or(Error::IndexOutOfRange {
            what: "nearest class",
            value: class as i64,
            limit: domain.gaussians.len(),
        })?;
        log_pdfs.push(normal_log_pdf(routing.per_domain_delta[s], g.mu, g.sigma));
    }
    Ok(weights_from_scores(&log_pdfs, DistanceMode::L2Gmm))
}

/// Ablation weighting kernels.
///
/// * `Uniform`: w_s = 1/N.
/// * `L1`/`L2`: w_s ∝ exp(−d_s) with d_s the per-domain minimum prototype
///   distance under that norm (the L2 case reuses the routing deltas).
/// * `MahalanobisDiag`: w_s ∝ exp(−½ d_s²) with d_s the smallest
///   diagonal-Mahalanobis distance to any of the domain's prototypes (the
///   classical GMM responsibility, up to the shared normalization constant).
/// * `L2Gmm` delegates to [`mixture_weights_l2gmm`].
///
/// The embedding parameter is required because the L1 and Mahalanobis
/// kernels measure distances the routing decision does not carry.
pub fn mixture_weights_kernel(
    embedding: &EmbeddingVector,
    routing: &RoutingDecision,
    mixture: &FittedMixture,
    mode: DistanceMode,
) -> Result<MixtureWeights> {
    if mixture.is_empty() {
        return Err(Error::EmptyMixture);
    }
    check_routing_shape(routing, mixture)?;
    let n = mixture.len();
    match mode {
        DistanceMode::L2Gmm => mixture_weights_l2gmm(routing, mixture),
        DistanceMode::Uniform => Ok(MixtureWeights {
            weights: vec![1.0 / n as f64; n],
            mode,
            uniform_fallback: false,
        }),
        DistanceMode::L2 => {
            let scores: Vec<f64> = routing.per_domain_delta.iter().map(|d| -d).collect();
            Ok(weights_from_scores(&scores, mode))
        }
        DistanceMode::L1 => {
            let z = if mixture.config.normalize_embeddings {
                embedding.normalized()?
            } else {
                embedding.clone()
            };
            let mut scores = Vec::with_capacity(n);
            for domain in &mixture.domains {
                let mut best = f64::INFINITY;
                for p in &domain.prototypes {
                    best = best.min(l1_distance(&z, p)?);
                }
                scores.push(-best);
            }
            Ok(weights_from_scores(&scores, mode))
        }
        DistanceMode::MahalanobisDiag => {
            let z = if mixture.config.normalize_embeddings {
                embedding.normalized()?
            } else {
                embedding.clone()
            };
            let mut scores = Vec::with_capacity(n);
            for domain in &mixture.domains {
                let mut best = f64::INFINITY;
                for (p, var) in domain.prototypes.iter().zip(&domain.diag_variance) {
                    best = best.min(mahalanobis_diag_distance(&z, p, var)?);
                }
                scores.push(-0.5 * best * best);
            }
            Ok(weights_from_scores(&scores, mode))
        }
    }
}

/// Convex combination of per-domain posteriors.
pub fn ensemble_posterior(weights: &MixtureWeights, per_domain: &[Posterior]) -> Result<Posterior> {
    if weights.weights.len() != per_domain.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.weights.len(),
            actual: per_domain.len(),
        });
    }
    let first = per_domain.first().ok_or(Error::EmptyMixture)?;
    let classes = first.probs.len();
    let mut probs = vec![0.0f64; classes];
    for (w, posterior) in weights.weights.iter().zip(per_domain) {
        if posterior.probs.len() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                actual: posterior.probs.len(),
            });
        }
        for (acc, p) in probs.iter_mut().zip(&posterior.probs) {
            *acc += w * p;
        }
    }
    Ok(Posterior { probs })
}

/// Full inference.
///
/// Routes the embedding, then classifies:
/// * `Hybrid`: in-distribution samples use the selected domain alone
///   (weights stay absent; effectively a one-hot weight on the selected
///   domain), everything else is ensembled;
/// * `AlwaysSingle` / `AlwaysEnsemble`: force one branch; the routing
///   trace, including the gate decision, is still reported.
///
/// The ensembling branch computes per-domain posteriors for all fitted
/// domains, weights them with the configured kernel and mixes.
pub fn infer(embedding: &EmbeddingVector, mixture: &FittedMixture) -> Result<Prediction> {
    let routing = route(embedding, mixture)?;
    let single = match mixture.config.ensemble_mode {
        crate::config::EnsembleMode::AlwaysSingle => true,
        crate::config::EnsembleMode::AlwaysEnsemble => false,
        crate::config::EnsembleMode::Hybrid => routing.is_in_distribution,
    };
    if single {
        let posterior = per_domain_posterior(
            embedding,
            &mixture.domains[routing.selected_domain],
            mixture.config.temperature,
        )?;
        Ok(Prediction {
            posterior,
            routing,
            weights: None,
        })
    } else {
        let per_domain: Vec<Posterior> = mixture
            .domains
            .iter()
            .map(|d| per_domain_posterior(embedding, d, mixture.config.temperature))
            .collect::<Result<_>>()?;
        let weights =
            mixture_weights_kernel(embedding, &routing, mixture, mixture.config.distance_mode)?;
        let posterior = ensemble_posterior(&weights, &per_domain)?;
        Ok(Prediction {
            posterior,
            routing,
            weights: Some(weights),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EnsembleMode, InferenceConfig};
    use crate::domain::{fit_domain, ClassGaussian, DomainModel};
    use crate::embedding::LabeledSample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn decision(deltas: Vec<f64>, classes: Vec<usize>) -> RoutingDecision {
        let selected = deltas
            .iter()
            .enumerate()
            .fold((0usize, f64::INFINITY), |acc, (i, &d)| {
                if d < acc.1 {
                    (i, d)
                } else {
                    acc
                }
            })
            .0;
        RoutingDecision {
            per_domain_delta: deltas,
            per_domain_nearest_class: classes,
            selected_domain: selected,
            cdf_value: 1.0,
            is_in_distribution: false,
        }
    }

    /// Two-domain mixture around (0,...) and (offset,...), one prototype
    /// per class on each axis pair.
    fn two_domain_mixture(offset: f64, config: InferenceConfig) -> FittedMixture {
        let mut mix = FittedMixture::new(2, 2, config.clone()).unwrap();
        for (id, base) in [0.0, offset].iter().enumerate() {
            let samples = vec![
                LabeledSample::new(ev(&[base + 1.0, 0.1]), Some(id), 0),
                LabeledSample::new(ev(&[base + 1.0, -0.1]), Some(id), 0),
                LabeledSample::new(ev(&[base + 0.1, 1.0]), Some(id), 1),
                LabeledSample::new(ev(&[base - 0.1, 1.0]), Some(id), 1),
            ];
            mix.push_domain(fit_domain(&samples, 2, &config).unwrap())
                .unwrap();
        }
        mix
    }

    fn gaussian_mixture(params: Vec<(f64, f64)>) -> FittedMixture {
        let mut mix = FittedMixture::new(2, 1, InferenceConfig::default()).unwrap();
        for (i, (mu, sigma)) in params.into_iter().enumerate() {
            mix.push_domain(DomainModel {
                domain_id: i,
                prototypes: vec![ev(&[i as f64, 0.0])],
                gaussians: vec![ClassGaussian { mu, sigma, n: 4 }],
                class_heads: Some(vec![ev(&[1.0, 0.0])]),
                diag_variance: vec![vec![1.0, 1.0]],
            })
            .unwrap();
        }
        mix
    }

    #[test]
    fn l2gmm_single_domain_is_one() {
        let mix = gaussian_mixture(vec![(1.0, 1.0)]);
        let w = mixture_weights_l2gmm(&decision(vec![0.7], vec![0]), &mix).unwrap();
        assert_eq!(w.weights, vec![1.0]);
    }

    #[test]
    fn l2gmm_symmetric_domains_split_evenly() {
        let mix = gaussian_mixture(vec![(1.0, 0.5), (1.0, 0.5)]);
        let w = mixture_weights_l2gmm(&decision(vec![2.0, 2.0], vec![0, 0]), &mix).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-12);
        assert!((w.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn l2gmm_matches_pdf_ratio_oracle() {
        // deltas (1, 3), both gaussians (mu=1, sigma=1): density ratio
        // exp(0) : exp(-2), normalized.
        let mix = gaussian_mixture(vec![(1.0, 1.0), (1.0, 1.0)]);
        let w = mixture_weights_l2gmm(&decision(vec![1.0, 3.0], vec![0, 0]), &mix).unwrap();
        assert!((w.weights[0] - 0.8807970779778823).abs() < 1e-12);
        assert!((w.weights[1] - 0.11920292202211755).abs() < 1e-12);
    }

    #[test]
    fn l2gmm_shift_of_all_log_pdfs_cancels() {
        // scaling every sigma by c while keeping each z = (delta - mu)/sigma
        // fixed shifts all log-pdfs by the common constant -ln(c); the
        // max-subtraction path must leave the weights unchanged
        let a = gaussian_mixture(vec![(1.0, 0.5), (2.0, 0.5)]);
        let b = gaussian_mixture(vec![(1.0, 50.0), (2.0, 50.0)]);
        let z = [1.0, 0.5];
        let wa = mixture_weights_l2gmm(
            &decision(vec![1.0 + z[0] * 0.5, 2.0 + z[1] * 0.5], vec![0, 0]),
            &a,
        )
        .unwrap();
        let wb = mixture_weights_l2gmm(
            &decision(vec![1.0 + z[0] * 50.0, 2.0 + z[1] * 50.0], vec![0, 0]),
            &b,
        )
        .unwrap();
        for (x, y) in wa.weights.iter().zip(&wb.weights) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn l2gmm_survives_underflow() {
        // 50 sigma out on every domain: raw pdfs underflow to 0, the
        // log-domain path must stay finite and normalized
        let mix = gaussian_mixture(vec![(1.0, 0.01), (2.0, 0.02)]);
        let d = decision(vec![1.0 + 50.0 * 0.01, 2.0 + 50.0 * 0.02], vec![0, 0]);
        let w = mixture_weights_l2gmm(&d, &mix).unwrap();
        assert!(w.weights.iter().all(|v| v.is_finite()));
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(!w.uniform_fallback);
    }

    #[test]
    fn kernel_uniform_and_l2_examples() {
        let mix = gaussian_mixture(vec![(1.0, 1.0); 4]);
        let d = decision(vec![0.3, 0.9, 0.1, 2.0], vec![0, 0, 0, 0]);
        let x = ev(&[0.0, 0.0]);
        let w = mixture_weights_kernel(&x, &d, &mix, DistanceMode::Uniform).unwrap();
        assert_eq!(w.weights, vec![0.25; 4]);

        let mix2 = gaussian_mixture(vec![(1.0, 1.0), (1.0, 1.0)]);
        let even = mixture_weights_kernel(
            &x,
            &decision(vec![0.0, 0.0], vec![0, 0]),
            &mix2,
            DistanceMode::L2,
        )
        .unwrap();
        assert!((even.weights[0] - 0.5).abs() < 1e-12);

        let w = mixture_weights_kernel(
            &x,
            &decision(vec![0.0, 1.0], vec![0, 0]),
            &mix2,
            DistanceMode::L2,
        )
        .unwrap();
        assert!((w.weights[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((w.weights[1] - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn kernel_l1_and_mahalanobis_use_their_own_distances() {
        let config = InferenceConfig::default();
        let mix = two_domain_mixture(10.0, config);
        let x = ev(&[1.0, 0.0]);
        let routing = route(&x, &mix).unwrap();
        for mode in [DistanceMode::L1, DistanceMode::MahalanobisDiag] {
            let w = mixture_weights_kernel(&x, &routing, &mix, mode).unwrap();
            assert_eq!(w.mode, mode);
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(w.weights[0] > w.weights[1]);
        }
    }

    #[test]
    fn ensemble_posterior_examples() {
        let p0 = Posterior {
            probs: vec![1.0, 0.0],
        };
        let p1 = Posterior {
            probs: vec![0.0, 1.0],
        };
        let one_hot = MixtureWeights {
            weights: vec![1.0, 0.0],
            mode: DistanceMode::Uniform,
            uniform_fallback: false,
        };
        assert_eq!(
            ensemble_posterior(&one_hot, &[p0.clone(), p1.clone()]).unwrap(),
            p0
        );
        let even = MixtureWeights {
            weights: vec![0.5, 0.5],
            mode: DistanceMode::Uniform,
            uniform_fallback: false,
        };
        assert_eq!(
            ensemble_posterior(&even, &[p0.clone(), p1.clone()])
                .unwrap()
                .probs,
            vec![0.5, 0.5]
        );
        // identical posteriors are a fixed point for any weights
        let w = MixtureWeights {
            weights: vec![0.3, 0.7],
            mode: DistanceMode::Uniform,
            uniform_fallback: false,
        };
        assert_eq!(
            ensemble_posterior(&w, &[p0.clone(), p0.clone()]).unwrap(),
            p0
        );
        assert!(ensemble_posterior(&w, &[p0]).is_err());
    }

    #[test]
    fn single_domain_prediction_ignores_gate() {
        let config = InferenceConfig {
            q: 0.94,
            ..Default::default()
        };
        let mut mix = FittedMixture::new(2, 2, config.clone()).unwrap();
        let samples = vec![
            LabeledSample::new(ev(&[1.0, 0.0]), Some(0), 0),
            LabeledSample::new(ev(&[0.0, 1.0]), Some(0), 1),
        ];
        mix.push_domain(fit_domain(&samples, 2, &config).unwrap())
            .unwrap();
        // far away: gate says OOD, but ensembling over one domain equals
        // that domain's posterior
        let x = ev(&[50.0, 3.0]);
        let pred = infer(&x, &mix).unwrap();
        let direct = per_domain_posterior(&x, &mix.domains[0], 1.0).unwrap();
        assert_eq!(pred.posterior, direct);
    }

    #[test]
    fn hybrid_routes_prototype_points_to_their_domain() {
        let config = InferenceConfig::default();
        let mix = two_domain_mixture(100.0, config);
        let proto = mix.domains[0].prototypes[1].clone();
        let pred = infer(&proto, &mix).unwrap();
        assert!(pred.routing.is_in_distribution);
        assert_eq!(pred.routing.selected_domain, 0);
        assert_eq!(pred.posterior.argmax(), 1);
        assert!(pred.weights.is_none());
    }

    #[test]
    fn always_ensemble_with_uniform_averages_posteriors() {
        let config = InferenceConfig {
            ensemble_mode: EnsembleMode::AlwaysEnsemble,
            distance_mode: DistanceMode::Uniform,
            ..Default::default()
        };
        let mix = two_domain_mixture(3.0, config);
        let x = ev(&[1.5, 0.4]);
        let pred = infer(&x, &mix).unwrap();
        let p0 = per_domain_posterior(&x, &mix.domains[0], 1.0).unwrap();
        let p1 = per_domain_posterior(&x, &mix.domains[1], 1.0).unwrap();
        for (k, p) in pred.posterior.probs.iter().enumerate() {
            assert!((p - 0.5 * (p0.probs[k] + p1.probs[k])).abs() <= 1e-12);
        }
        assert!(pred.weights.is_some());
    }

    #[test]
    fn hybrid_equals_manual_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let config = InferenceConfig::default();
        let mix = two_domain_mixture(4.0, config);
        let mut saw_id = false;
        let mut saw_ood = false;
        for _ in 0..500 {
            let x = ev(&[rng.random_range(-2.0..8.0), rng.random_range(-2.0..4.0)]);
            let pred = infer(&x, &mix).unwrap();
            let routing = route(&x, &mix).unwrap();
            assert_eq!(pred.routing, routing);
            if routing.is_in_distribution {
                saw_id = true;
                let direct = per_domain_posterior(
                    &x,
                    &mix.domains[routing.selected_domain],
                    mix.config.temperature,
                )
                .unwrap();
                assert_eq!(pred.posterior, direct);
                assert!(pred.weights.is_none());
            } else {
                saw_ood = true;
                let per: Vec<Posterior> = mix
                    .domains
                    .iter()
                    .map(|d| per_domain_posterior(&x, d, mix.config.temperature).unwrap())
                    .collect();
                let w =
                    mixture_weights_kernel(&x, &routing, &mix, mix.config.distance_mode).unwrap();
                let expected = ensemble_posterior(&w, &per).unwrap();
                assert_eq!(pred.posterior, expected);
                assert_eq!(pred.weights.as_ref().unwrap(), &w);
            }
        }
        assert!(saw_id && saw_ood, "fixture must exercise both branches");
    }

    #[test]
    fn weights_normalize_across_kernels_and_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let config = InferenceConfig::default();
        let mix = two_domain_mixture(2.5, config);
        for _ in 0..1000 {
            let x = ev(&[rng.random_range(-3.0..6.0), rng.random_range(-3.0..3.0)]);
            let routing = route(&x, &mix).unwrap();
            for mode in DistanceMode::ALL {
                let w = mixture_weights_kernel(&x, &routing, &mix, mode).unwrap();
                assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                assert!(w.weights.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
