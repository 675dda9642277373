//! Python bindings: the main types and operations of the mopdil library.
//!
//! The module mirrors the Rust API at the granularity a notebook wants:
//! distance kernels and the Gaussian CDF as plain functions, a `Mixture`
//! class for fitting/routing/inference/persistence, `InferenceConfig` and
//! `SynthSpec` as keyword-constructible configs, and the synthetic
//! experiment drivers returning plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use mopdil::{
    ClassGaussian, DomainModel, EmbeddingVector, FittedMixture, LabeledSample, Prediction,
    RoutingDecision,
};

fn to_py_err(err: mopdil::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn embedding(values: Vec<f64>) -> PyResult<EmbeddingVector> {
    EmbeddingVector::new(values).map_err(to_py_err)
}

fn embeddings(rows: Vec<Vec<f64>>) -> PyResult<Vec<EmbeddingVector>> {
    rows.into_iter().map(embedding).collect()
}

/// Cosine similarity of two equal-length vectors.
#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    mopdil::cosine_similarity(&embedding(a)?, &embedding(b)?).map_err(to_py_err)
}

/// Euclidean distance of two equal-length vectors.
#[pyfunction]
fn l2_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    mopdil::l2_distance(&embedding(a)?, &embedding(b)?).map_err(to_py_err)
}

/// Manhattan distance of two equal-length vectors.
#[pyfunction]
fn l1_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    mopdil::l1_distance(&embedding(a)?, &embedding(b)?).map_err(to_py_err)
}

/// Diagonal-covariance Mahalanobis distance.
#[pyfunction]
fn mahalanobis_diag_distance(a: Vec<f64>, mean: Vec<f64>, var_diag: Vec<f64>) -> PyResult<f64> {
    mopdil::mahalanobis_diag_distance(&embedding(a)?, &embedding(mean)?, &var_diag)
        .map_err(to_py_err)
}

/// CDF of the normal distribution N(mu, sigma^2) at x.
#[pyfunction]
fn gaussian_cdf(x: f64, mu: f64, sigma: f64) -> PyResult<f64> {
    mopdil::gaussian_cdf(x, mu, sigma).map_err(to_py_err)
}

/// Seeded k-means (k-means++ init, Lloyd iterations); returns k centroids.
#[pyfunction]
#[pyo3(signature = (samples, k, seed=0, max_iters=100))]
fn kmeans_prototypes(
    samples: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let centroids =
        mopdil::kmeans_prototypes(&embeddings(samples)?, k, seed, max_iters).map_err(to_py_err)?;
    Ok(centroids.into_iter().map(|c| c.into_inner()).collect())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<mopdil::AccuracyMatrix> {
    mopdil::AccuracyMatrix::from_rows(rows).map_err(to_py_err)
}

/// Mean accuracy over the final column of an accuracy matrix
/// (`matrix[i][j]` = accuracy on domain i after j+1 fitted domains;
/// unpopulated entries are NaN).
#[pyfunction]
fn average_accuracy(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    matrix_from_rows(matrix)?
        .average_accuracy()
        .map_err(to_py_err)
}

/// Mean backward-transfer degradation of an accuracy matrix.
#[pyfunction]
fn average_forgetting(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    matrix_from_rows(matrix)?
        .average_forgetting()
        .map_err(to_py_err)
}

/// Mean accuracy on not-yet-seen domains, averaged over steps.
#[pyfunction]
fn cumulative_unseen_accuracy(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    matrix_from_rows(matrix)?
        .cumulative_unseen_accuracy()
        .map_err(to_py_err)
}

/// Inference knobs: gate threshold, weighting kernel, branch policy.
#[pyclass(name = "InferenceConfig", from_py_object)]
#[derive(Clone)]
struct PyInferenceConfig {
    inner: mopdil::InferenceConfig,
}

#[pymethods]
impl PyInferenceConfig {
    #[new]
    #[pyo3(signature = (q=0.94, distance_mode="l2gmm", ensemble_mode="hybrid", temperature=1.0, normalize_embeddings=false, sigma_floor=1e-6))]
    fn new(
        q: f64,
        distance_mode: &str,
        ensemble_mode: &str,
        temperature: f64,
        normalize_embeddings: bool,
        sigma_floor: f64,
    ) -> PyResult<Self> {
        let inner = mopdil::InferenceConfig {
            q,
            distance_mode: distance_mode.parse().map_err(to_py_err)?,
            ensemble_mode: ensemble_mode.parse().map_err(to_py_err)?,
            temperature,
            normalize_embeddings,
            sigma_floor,
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }

    #[getter]
    fn distance_mode(&self) -> String {
        self.inner.distance_mode.to_string()
    }

    #[getter]
    fn ensemble_mode(&self) -> String {
        self.inner.ensemble_mode.to_string()
    }

    #[getter]
    fn temperature(&self) -> f64 {
        self.inner.temperature
    }

    fn __repr__(&self) -> String {
        format!(
            "InferenceConfig(q={}, distance_mode='{}', ensemble_mode='{}', temperature={})",
            self.inner.q,
            self.inner.distance_mode,
            self.inner.ensemble_mode,
            self.inner.temperature
        )
    }
}

fn routing_dict<'py>(py: Python<'py>, routing: &RoutingDecision) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("per_domain_delta", routing.per_domain_delta.clone())?;
    d.set_item(
        "per_domain_nearest_class",
        routing.per_domain_nearest_class.clone(),
    )?;
    d.set_item("selected_domain", routing.selected_domain)?;
    d.set_item("cdf", routing.cdf_value)?;
    d.set_item("is_in_distribution", routing.is_in_distribution)?;
    Ok(d)
}

fn prediction_dict<'py>(py: Python<'py>, pred: &Prediction) -> PyResult<Bound<'py, PyDict>> {
    let d = routing_dict(py, &pred.routing)?;
    d.set_item("posterior", pred.posterior.probs.clone())?;
    d.set_item("argmax_class", pred.posterior.argmax())?;
    match &pred.weights {
        Some(w) => {
            d.set_item("weights", w.weights.clone())?;
            d.set_item("weight_mode", w.mode.to_string())?;
            d.set_item("uniform_fallback", w.uniform_fallback)?;
        }
        None => {
            d.set_item("weights", py.None())?;
        }
    }
    Ok(d)
}

/// An append-only collection of fitted domains sharing one configuration.
#[pyclass(name = "Mixture")]
struct PyMixture {
    inner: FittedMixture,
}

#[pymethods]
impl PyMixture {
    #[new]
    #[pyo3(signature = (dimension, num_classes, config=None))]
    fn new(
        dimension: usize,
        num_classes: usize,
        config: Option<PyInferenceConfig>,
    ) -> PyResult<Self> {
        let config = config.map_or_else(mopdil::InferenceConfig::default, |c| c.inner);
        Ok(Self {
            inner: FittedMixture::new(dimension, num_classes, config).map_err(to_py_err)?,
        })
    }

    /// Fit the next domain from per-sample embeddings and class labels.
    fn add_domain(
        &mut self,
        embeddings_rows: Vec<Vec<f64>>,
        classes: Vec<usize>,
    ) -> PyResult<usize> {
        if embeddings_rows.len() != classes.len() {
            return Err(PyValueError::new_err(format!(
                "{} embeddings but {} class labels",
                embeddings_rows.len(),
                classes.len()
            )));
        }
        let domain_id = self.inner.len();
        let samples: Vec<LabeledSample> = embeddings(embeddings_rows)?
            .into_iter()
            .zip(classes)
            .map(|(e, c)| LabeledSample::new(e, Some(domain_id), c))
            .collect();
        let model = mopdil::fit_domain(&samples, self.inner.num_classes, &self.inner.config)
            .map_err(to_py_err)?;
        self.inner.push_domain(model).map_err(to_py_err)?;
        Ok(domain_id)
    }

    /// Fit the next domain in centroid-only mode (routes but cannot classify).
    #[pyo3(signature = (embeddings_rows, num_centroids, seed=0, max_iters=100))]
    fn add_domain_kmeans(
        &mut self,
        embeddings_rows: Vec<Vec<f64>>,
        num_centroids: usize,
        seed: u64,
        max_iters: usize,
    ) -> PyResult<usize> {
        let domain_id = self.inner.len();
        let samples: Vec<LabeledSample> = embeddings(embeddings_rows)?
            .into_iter()
            .map(|e| LabeledSample::new(e, Some(domain_id), 0))
            .collect();
        let model =
            mopdil::fit_domain_kmeans(&samples, num_centroids, seed, max_iters, &self.inner.config)
                .map_err(to_py_err)?;
        self.inner.push_domain(model).map_err(to_py_err)?;
        Ok(domain_id)
    }

    /// Full inference: routing trace, posterior, weights when ensembled.
    fn infer<'py>(&self, py: Python<'py>, embedding_row: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let pred = mopdil::infer(&embedding(embedding_row)?, &self.inner).map_err(to_py_err)?;
        prediction_dict(py, &pred)
    }

    /// Routing only: per-domain deltas, selected domain, gate decision.
    fn route<'py>(&self, py: Python<'py>, embedding_row: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let routing = mopdil::route(&embedding(embedding_row)?, &self.inner).map_err(to_py_err)?;
        routing_dict(py, &routing)
    }

    /// One domain's cosine-softmax class posterior.
    fn posterior(&self, embedding_row: Vec<f64>, domain: usize) -> PyResult<Vec<f64>> {
        let model: &DomainModel = self
            .inner
            .domains
            .get(domain)
            .ok_or_else(|| PyValueError::new_err(format!("no domain {domain}")))?;
        let p = mopdil::per_domain_posterior(
            &embedding(embedding_row)?,
            model,
            self.inner.config.temperature,
        )
        .map_err(to_py_err)?;
        Ok(p.probs)
    }

    /// Class prototypes (or centroids) of one fitted domain.
    fn prototypes(&self, domain: usize) -> PyResult<Vec<Vec<f64>>> {
        let model = self
            .inner
            .domains
            .get(domain)
            .ok_or_else(|| PyValueError::new_err(format!("no domain {domain}")))?;
        Ok(model
            .prototypes
            .iter()
            .map(|p| p.as_slice().to_vec())
            .collect())
    }

    /// Distance Gaussian (mu, sigma, n) of one domain and class.
    fn gaussian(&self, domain: usize, class: usize) -> PyResult<(f64, f64, usize)> {
        let model = self
            .inner
            .domains
            .get(domain)
            .ok_or_else(|| PyValueError::new_err(format!("no domain {domain}")))?;
        let g: &ClassGaussian = model
            .gaussians
            .get(class)
            .ok_or_else(|| PyValueError::new_err(format!("no class {class}")))?;
        Ok((g.mu, g.sigma, g.n))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        mopdil::io::save_model(&self.inner, path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: mopdil::io::load_model(path).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn num_domains(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    fn __repr__(&self) -> String {
        format!(
            "Mixture(dimension={}, num_classes={}, num_domains={})",
            self.inner.dimension,
            self.inner.num_classes,
            self.inner.len()
        )
    }
}

/// Parameters of a synthetic domain stream.
#[pyclass(name = "SynthSpec", from_py_object)]
#[derive(Clone)]
struct PySynthSpec {
    inner: mopdil::SynthSpec,
}

#[pymethods]
impl PySynthSpec {
    #[new]
    #[pyo3(signature = (dimension=8, num_domains=3, num_classes=2, train_per_class=50, test_per_class=50, cluster_sigma=0.1, class_separation=4.0, domain_shift=4.0, seed=42))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dimension: usize,
        num_domains: usize,
        num_classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        cluster_sigma: f64,
        class_separation: f64,
        domain_shift: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = mopdil::SynthSpec {
            dimension,
            num_domains,
            num_classes,
            train_per_class,
            test_per_class,
            cluster_sigma,
            class_separation,
            domain_shift,
            seed,
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }
}

/// Run the sequential synthetic protocol; returns the accuracy matrix,
/// gate fractions and the AA/AF/CA metrics as a dict.
#[pyfunction]
#[pyo3(signature = (spec, config=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    spec: PySynthSpec,
    config: Option<PyInferenceConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = config.map_or_else(mopdil::InferenceConfig::default, |c| c.inner);
    let report = mopdil::run_experiment(&spec.inner, &config).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("accuracy_matrix", report.accuracy_matrix.rows())?;
    d.set_item(
        "gate_id_fraction_per_step",
        report.gate_id_fraction_per_step,
    )?;
    d.set_item("aa", report.aa)?;
    d.set_item("af", report.af)?;
    d.set_item("ca", report.ca)?;
    Ok(d)
}

/// Sweep the gate threshold on a synthetic stream; one dict per q value.
#[pyfunction]
#[pyo3(signature = (spec, q_values, config=None))]
fn sweep_q<'py>(
    py: Python<'py>,
    spec: PySynthSpec,
    q_values: Vec<f64>,
    config: Option<PyInferenceConfig>,
) -> PyResult<Bound<'py, PyList>> {
    let config = config.map_or_else(mopdil::InferenceConfig::default, |c| c.inner);
    let points = mopdil::sweep_q(&spec.inner, &config, &q_values).map_err(to_py_err)?;
    let list = PyList::empty(py);
    for p in points {
        let d = PyDict::new(py);
        d.set_item("q", p.q)?;
        d.set_item("id_accuracy", p.id_accuracy)?;
        d.set_item("ood_accuracy", p.ood_accuracy)?;
        d.set_item("gate_id_fraction", p.gate_id_fraction)?;
        list.append(d)?;
    }
    Ok(list)
}

#[pymodule]
fn mopdil_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInferenceConfig>()?;
    m.add_class::<PyMixture>()?;
    m.add_class::<PySynthSpec>()?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(l1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(l2_distance, m)?)?;
    m.add_function(wrap_pyfunction!(mahalanobis_diag_distance, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans_prototypes, m)?)?;
    m.add_function(wrap_pyfunction!(average_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(average_forgetting, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_unseen_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_q, m)?)?;
    Ok(())
}
