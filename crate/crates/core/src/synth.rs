//! Synthetic embedding-space benchmark: seeded streams of Gaussian class
//! clusters standing in for real features, plus the sequential protocol
//! (fit a domain, evaluate everything, move on) that produces the accuracy
//! matrix, gate statistics and threshold-sweep curves.
//!
//! Geometry: class `k` of generating domain `d` is centred at
//! `sep·e_k + d·shift·u`, where the `e_k` are coordinate axes (hence the
//! `dimension >= num_classes` requirement) and `u` is a unit direction off
//! the class axes; a seeded orthogonal rotation is then applied to every
//! mean. Distances are preserved, so within-domain class means are exactly
//! `sep·√2` apart and corresponding class means of adjacent domains exactly
//! `shift` apart.
//!
//! Noise streams are keyed by (seed, split) but *not* by domain, i.e. the
//! same noise realizations recur in every domain (common random numbers).
//! Consequence: with `domain_shift = 0` all domains are bit-identical,
//! which makes the symmetry checks exact.
//!
//! Each stream entry also carries an out-of-distribution test split drawn
//! from the same geometry family at the fractional index `s + 0.5`: a
//! domain halfway between two fitted ones (or half a shift beyond the last),
//! never fitted. Midpoints keep held-out domains within the gate's active
//! range instead of parking them arbitrarily far out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::InferenceConfig;
use crate::domain::{fit_domain, FittedMixture};
use crate::embedding::{EmbeddingVector, LabeledSample};
use crate::ensemble::infer;
use crate::error::{Error, Result};
use crate::metrics::AccuracyMatrix;

/// Parameters of a synthetic stream. All defaults are arbitrary desk-scale
/// choices, not values taken from any dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Embedding dimension L; must be at least `num_classes`.
    pub dimension: usize,
    /// Number of sequentially fitted domains N.
    pub num_domains: usize,
    /// Number of classes K, shared by every domain.
    pub num_classes: usize,
    /// Training samples drawn per class and domain.
    pub train_per_class: usize,
    /// Test samples drawn per class for each of the two test splits.
    pub test_per_class: usize,
    /// Within-class standard deviation.
    pub cluster_sigma: f64,
    /// Distance scale between class means inside one domain.
    pub class_separation: f64,
    /// Displacement between corresponding class means of adjacent domains.
    pub domain_shift: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dimension: 8,
            num_domains: 3,
            num_classes: 2,
            train_per_class: 50,
            test_per_class: 50,
            cluster_sigma: 0.1,
            class_separation: 4.0,
            domain_shift: 4.0,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0
            || self.num_domains == 0
            || self.num_classes == 0
            || self.train_per_class == 0
            || self.test_per_class == 0
        {
            return Err(Error::InvalidConfig(
                "all synthetic counts must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("cluster_sigma", self.cluster_sigma),
            ("class_separation", self.class_separation),
            ("domain_shift", self.domain_shift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.dimension < self.num_classes {
            return Err(Error::InfeasibleGeometry {
                classes: self.num_classes,
                dimension: self.dimension,
            });
        }
        Ok(())
    }
}

/// One step of the stream: the domain's training batch, its in-distribution
/// test split, and a test split from a held-out (never fitted) domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainStream {
    pub train: Vec<LabeledSample>,
    pub test_id: Vec<LabeledSample>,
    pub test_ood: Vec<LabeledSample>,
}

/// Outcome of a full sequential experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub accuracy_matrix: AccuracyMatrix,
    /// Per step, the fraction of all in-distribution test samples the gate
    /// accepted.
    pub gate_id_fraction_per_step: Vec<f64>,
    pub aa: f64,
    /// Absent for single-domain streams.
    pub af: Option<f64>,
    pub ca: Option<f64>,
    pub spec: SynthSpec,
    pub config: InferenceConfig,
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QSweepPoint {
    pub q: f64,
    pub id_accuracy: f64,
    pub ood_accuracy: f64,
    /// Fraction of all test samples (both splits) gated in-distribution.
    pub gate_id_fraction: f64,
}

const SALT_ROTATION: u64 = 0x526f_7461;
const SALT_TRAIN: u64 = 0x5472_6169;
const SALT_TEST_ID: u64 = 0x5465_7374;
const SALT_TEST_OOD: u64 = 0x4f6f_6444;

fn salted_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Seeded orthogonal rotation as a sequence of plane (Givens) rotations.
fn rotation_plan(spec: &SynthSpec) -> Vec<(usize, usize, f64)> {
    let dim = spec.dimension;
    if dim < 2 {
        return Vec::new();
    }
    let mut rng = salted_rng(spec.seed, SALT_ROTATION);
    let mut plan = Vec::with_capacity(2 * dim);
    for _ in 0..2 * dim {
        let i = rng.random_range(0..dim);
        let mut j = rng.random_range(0..dim - 1);
        if j >= i {
            j += 1;
        }
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        plan.push((i, j, theta));
    }
    plan
}

fn apply_rotation(plan: &[(usize, usize, f64)], v: &mut [f64]) {
    for &(i, j, theta) in plan {
        let (sin, cos) = theta.sin_cos();
        let (a, b) = (v[i], v[j]);
        v[i] = cos * a - sin * b;
        v[j] = sin * a + cos * b;
    }
}

/// Mean of class `class` in the generating domain at `gen_index`
/// (fractional indices are held-out domains between or beyond the fitted
/// ones).
fn class_mean(
    spec: &SynthSpec,
    plan: &[(usize, usize, f64)],
    gen_index: f64,
    class: usize,
) -> Vec<f64> {
    let dim = spec.dimension;
    let mut v = vec![0.0f64; dim];
    v[class] += spec.class_separation;
    let offset = gen_index * spec.domain_shift;
    if dim > spec.num_classes {
        // a spare axis keeps the domain direction orthogonal to class axes
        v[spec.num_classes] += offset;
    } else {
        let unit = 1.0 / (dim as f64).sqrt();
        for x in v.iter_mut() {
            *x += offset * unit;
        }
    }
    apply_rotation(plan, &mut v);
    v
}

/// Draw one split for a generating domain. The noise stream restarts
/// identically for every domain; only the means differ.
fn generate_split(
    spec: &SynthSpec,
    plan: &[(usize, usize, f64)],
    gen_index: f64,
    split_salt: u64,
    per_class: usize,
    label_domain: Option<usize>,
) -> Result<Vec<LabeledSample>> {
    let mut rng = salted_rng(spec.seed, split_salt);
    let normal = StandardNormal;
    let mut out = Vec::with_capacity(spec.num_classes * per_class);
    for class in 0..spec.num_classes {
        let mean = class_mean(spec, plan, gen_index, class);
        for _ in 0..per_class {
            let values: Vec<f64> = mean
                .iter()
                .map(|m| {
                    let eps: f64 = normal.sample(&mut rng);
                    m + spec.cluster_sigma * eps
                })
                .collect();
            out.push(LabeledSample::new(
                EmbeddingVector::new(values)?,
                label_domain,
                class,
            ));
        }
    }
    Ok(out)
}

/// Generate the full sequential stream: per domain `s`, a training batch
/// and in-distribution test split labeled with domain `s`, plus an
/// out-of-distribution split from the held-out generating index `s + 0.5`
/// (domain label unknown). Bit-identical across calls for a fixed spec.
pub fn generate_stream(spec: &SynthSpec) -> Result<Vec<DomainStream>> {
    spec.validate()?;
    let plan = rotation_plan(spec);
    let mut stream = Vec::with_capacity(spec.num_domains);
    for s in 0..spec.num_domains {
        stream.push(DomainStream {
            train: generate_split(
                spec,
                &plan,
                s as f64,
                SALT_TRAIN,
                spec.train_per_class,
                Some(s),
            )?,
            test_id: generate_split(
                spec,
                &plan,
                s as f64,
                SALT_TEST_ID,
                spec.test_per_class,
                Some(s),
            )?,
            test_ood: generate_split(
                spec,
                &plan,
                s as f64 + 0.5,
                SALT_TEST_OOD,
                spec.test_per_class,
                None,
            )?,
        });
    }
    Ok(stream)
}

/// Argmax-accuracy of `infer` over the samples, plus how many the gate
/// accepted as in-distribution.
fn evaluate(mixture: &FittedMixture, samples: &[LabeledSample]) -> Result<(f64, usize)> {
    let mut correct = 0usize;
    let mut gated_id = 0usize;
    for s in samples {
        let pred = infer(&s.embedding, mixture)?;
        if pred.posterior.argmax() == s.class_id {
            correct += 1;
        }
        if pred.routing.is_in_distribution {
            gated_id += 1;
        }
    }
    Ok((correct as f64 / samples.len() as f64, gated_id))
}

/// Run the sequential protocol: fit domains in arrival order and, after
/// each step, evaluate classification accuracy on every domain's
/// in-distribution test split (including domains not yet fitted, which the
/// unseen-domain metric consumes).
pub fn run_experiment(spec: &SynthSpec, config: &InferenceConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let stream = generate_stream(spec)?;
    let n = spec.num_domains;
    let mut mixture = FittedMixture::new(spec.dimension, spec.num_classes, config.clone())?;
    let mut matrix = AccuracyMatrix::new(n);
    let mut gate_fractions = Vec::with_capacity(n);

    for (step, entry) in stream.iter().enumerate() {
        mixture.push_domain(fit_domain(&entry.train, spec.num_classes, config)?)?;
        let mut gated = 0usize;
        let mut total = 0usize;
        for (i, other) in stream.iter().enumerate() {
            let (acc, id_count) = evaluate(&mixture, &other.test_id)?;
            matrix.set(i, step, acc)?;
            gated += id_count;
            total += other.test_id.len();
        }
        gate_fractions.push(gated as f64 / total as f64);
        log::debug!(
            "step {}: fitted domain {}, gate id fraction {:.4}",
            step,
            step,
            gate_fractions[step]
        );
    }

    let aa = matrix.average_accuracy()?;
    let (af, ca) = if n >= 2 {
        (
            Some(matrix.average_forgetting()?),
            Some(matrix.cumulative_unseen_accuracy()?),
        )
    } else {
        (None, None)
    };
    Ok(ExperimentReport {
        accuracy_matrix: matrix,
        gate_id_fraction_per_step: gate_fractions,
        aa,
        af,
        ca,
        spec: spec.clone(),
        config: config.clone(),
    })
}

/// Threshold sweep over the final model: for each `q`, classification
/// accuracy on the pooled in-distribution and out-of-distribution test
/// splits, and the fraction of all test samples gated in-distribution.
pub fn sweep_q(
    spec: &SynthSpec,
    config: &InferenceConfig,
    q_values: &[f64],
) -> Result<Vec<QSweepPoint>> {
    if q_values.is_empty() {
        return Err(Error::InvalidConfig(
            "q sweep needs at least one value".into(),
        ));
    }
    for &q in q_values {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "q values must lie strictly in (0, 1), got {q}"
            )));
        }
    }
    config.validate()?;
    let stream = generate_stream(spec)?;
    let mut base = FittedMixture::new(spec.dimension, spec.num_classes, config.clone())?;
    for entry in &stream {
        base.push_domain(fit_domain(&entry.train, spec.num_classes, config)?)?;
    }
    let pooled_id: Vec<LabeledSample> = stream.iter().flat_map(|e| e.test_id.clone()).collect();
    let pooled_ood: Vec<LabeledSample> = stream.iter().flat_map(|e| e.test_ood.clone()).collect();

    let mut points = Vec::with_capacity(q_values.len());
    for &q in q_values {
        let mut mixture = base.clone();
        mixture.config.q = q;
        let (id_accuracy, id_gated) = evaluate(&mixture, &pooled_id)?;
        let (ood_accuracy, ood_gated) = evaluate(&mixture, &pooled_ood)?;
        let total = pooled_id.len() + pooled_ood.len();
        points.push(QSweepPoint {
            q,
            id_accuracy,
            ood_accuracy,
            gate_id_fraction: (id_gated + ood_gated) as f64 / total as f64,
        });
    }
    Ok(points)
}
