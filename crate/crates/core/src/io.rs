//! Persistence: the embedding CSV format and the model JSON format.
//!
//! Embedding files are UTF-8 comma-separated text with header
//! `id,domain,class,d0,...,d{L-1}` and one sample per line; a sample with
//! unknown domain (pure test data) uses domain `-1`. Values are written
//! with the shortest representation that parses back to the same f64.
//!
//! Model files are a single JSON document with `schema_version: 1`. Every
//! float is serialized as a decimal string with 17 significant digits, so
//! save → load → save is byte-identical and loaded models reproduce
//! inference outputs bit-exactly.
//!
//! All writes go through a temp-file-then-rename so a crash cannot leave a
//! half-written artifact behind.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::InferenceConfig;
use crate::domain::{ClassGaussian, DomainModel, FittedMixture};
use crate::embedding::{EmbeddingVector, LabeledSample};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u64 = 1;

/// One parsed embedding-file row: the opaque sample id plus the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub id: String,
    pub sample: LabeledSample,
}

/// In-memory form of an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dimension: usize,
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingFile {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            rows: Vec::new(),
        }
    }

    pub fn from_samples<I>(dimension: usize, samples: I) -> Self
    where
        I: IntoIterator<Item = LabeledSample>,
    {
        let rows = samples
            .into_iter()
            .enumerate()
            .map(|(i, sample)| EmbeddingRow {
                id: i.to_string(),
                sample,
            })
            .collect();
        Self { dimension, rows }
    }

    pub fn samples(&self) -> Vec<LabeledSample> {
        self.rows.iter().map(|r| r.sample.clone()).collect()
    }
}

pub(crate) fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    std::io::Write::write_all(&mut tmp, contents.as_bytes())?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Exactly 17 significant decimal digits: enough to reproduce any f64.
fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_stored_f64(s: &str, field: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::ModelFile(format!("field {field}: bad float literal '{s}'")))?;
    if !v.is_finite() {
        return Err(Error::ModelFile(format!(
            "field {field}: non-finite value '{s}'"
        )));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// embedding CSV
// ---------------------------------------------------------------------------

/// Parse an embedding file. Validates the header, per-row arity against the
/// header dimension, label ranges (domain >= -1, class >= 0) and that every
/// coordinate is a finite number. Rows come back in file order.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "missing header".into(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 4 || columns[0] != "id" || columns[1] != "domain" || columns[2] != "class" {
        return Err(Error::Parse {
            line: 1,
            reason: format!(
                "header must be 'id,domain,class,d0,...', got '{}'",
                header.trim_end()
            ),
        });
    }
    let dimension = columns.len() - 3;

    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != dimension + 3 {
            return Err(Error::Parse {
                line,
                reason: format!("expected {} fields, got {}", dimension + 3, fields.len()),
            });
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "empty id".into(),
            });
        }
        let domain_raw: i64 = fields[1].trim().parse().map_err(|_| Error::Parse {
            line,
            reason: format!("bad domain '{}'", fields[1]),
        })?;
        if domain_raw < -1 {
            return Err(Error::IndexOutOfRange {
                what: "domain",
                value: domain_raw,
                limit: usize::MAX,
            });
        }
        let domain_id = if domain_raw == -1 {
            None
        } else {
            Some(domain_raw as usize)
        };
        let class_raw: i64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line,
            reason: format!("bad class '{}'", fields[2]),
        })?;
        if class_raw < 0 {
            return Err(Error::IndexOutOfRange {
                what: "class",
                value: class_raw,
                limit: usize::MAX,
            });
        }
        let mut values = Vec::with_capacity(dimension);
        for f in &fields[3..] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line,
                reason: format!("bad coordinate '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    reason: format!("non-finite coordinate '{f}'"),
                });
            }
            values.push(v);
        }
        rows.push(EmbeddingRow {
            id: id.to_string(),
            sample: LabeledSample::new(
                EmbeddingVector::new(values)?,
                domain_id,
                class_raw as usize,
            ),
        });
    }
    Ok(EmbeddingFile { dimension, rows })
}

/// Write an embedding file (atomically).
pub fn save_embeddings(path: impl AsRef<Path>, file: &EmbeddingFile) -> Result<()> {
    let mut out = String::from("id,domain,class");
    for d in 0..file.dimension {
        let _ = write!(out, ",d{d}");
    }
    out.push('\n');
    for row in &file.rows {
        let domain = row.sample.domain_id.map_or(-1i64, |d| d as i64);
        let _ = write!(out, "{},{},{}", row.id, domain, row.sample.class_id);
        for v in row.sample.embedding.as_slice() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    atomic_write(path.as_ref(), &out)
}

// ---------------------------------------------------------------------------
// model JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ConfigRepr {
    q: String,
    distance_mode: String,
    ensemble_mode: String,
    temperature: String,
    normalize_embeddings: bool,
    sigma_floor: String,
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mu: String,
    sigma: String,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    domain_id: usize,
    prototypes: Vec<Vec<String>>,
    gaussians: Vec<GaussianRepr>,
    class_heads: Option<Vec<Vec<String>>>,
    diag_variance: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    schema_version: u64,
    config: ConfigRepr,
    dimension: usize,
    num_classes: usize,
    domains: Vec<DomainRepr>,
}

fn vector_repr(v: &EmbeddingVector) -> Vec<String> {
    v.as_slice().iter().copied().map(format_f64).collect()
}

fn vector_from_repr(raw: &[String], field: &str) -> Result<EmbeddingVector> {
    let values = raw
        .iter()
        .map(|s| parse_stored_f64(s, field))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingVector::new(values)
}

fn model_repr(mixture: &FittedMixture) -> ModelRepr {
    let config = &mixture.config;
    ModelRepr {
        schema_version: MODEL_SCHEMA_VERSION,
        config: ConfigRepr {
            q: format_f64(config.q),
            distance_mode: config.distance_mode.as_str().to_string(),
            ensemble_mode: config.ensemble_mode.as_str().to_string(),
            temperature: format_f64(config.temperature),
            normalize_embeddings: config.normalize_embeddings,
            sigma_floor: format_f64(config.sigma_floor),
        },
        dimension: mixture.dimension,
        num_classes: mixture.num_classes,
        domains: mixture
            .domains
            .iter()
            .map(|d| DomainRepr {
                domain_id: d.domain_id,
                prototypes: d.prototypes.iter().map(vector_repr).collect(),
                gaussians: d
                    .gaussians
                    .iter()
                    .map(|g| GaussianRepr {
                        mu: format_f64(g.mu),
                        sigma: format_f64(g.sigma),
                        n: g.n,
                    })
                    .collect(),
                class_heads: d
                    .class_heads
                    .as_ref()
                    .map(|heads| heads.iter().map(vector_repr).collect()),
                diag_variance: d
                    .diag_variance
                    .iter()
                    .map(|v| v.iter().copied().map(format_f64).collect())
                    .collect(),
            })
            .collect(),
    }
}

fn mixture_from_repr(repr: ModelRepr) -> Result<FittedMixture> {
    let config = InferenceConfig {
        q: parse_stored_f64(&repr.config.q, "config.q")?,
        distance_mode: repr.config.distance_mode.parse()?,
        ensemble_mode: repr.config.ensemble_mode.parse()?,
        temperature: parse_stored_f64(&repr.config.temperature, "config.temperature")?,
        normalize_embeddings: repr.config.normalize_embeddings,
        sigma_floor: parse_stored_f64(&repr.config.sigma_floor, "config.sigma_floor")?,
    };
    let mut mixture = FittedMixture::new(repr.dimension, repr.num_classes, config)?;
    for d in repr.domains {
        let prototypes = d
            .prototypes
            .iter()
            .map(|p| vector_from_repr(p, "prototype"))
            .collect::<Result<Vec<_>>>()?;
        let gaussians = d
            .gaussians
            .iter()
            .map(|g| {
                Ok(ClassGaussian {
                    mu: parse_stored_f64(&g.mu, "gaussian.mu")?,
                    sigma: parse_stored_f64(&g.sigma, "gaussian.sigma")?,
                    n: g.n,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let class_heads = match d.class_heads {
            Some(heads) => Some(
                heads
                    .iter()
                    .map(|h| vector_from_repr(h, "class_head"))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let diag_variance = d
            .diag_variance
            .iter()
            .map(|v| {
                v.iter()
                    .map(|s| parse_stored_f64(s, "diag_variance"))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        mixture.push_domain(DomainModel {
            domain_id: d.domain_id,
            prototypes,
            gaussians,
            class_heads,
            diag_variance,
        })?;
    }
    Ok(mixture)
}

/// Serialize a fitted mixture (atomically). An empty mixture is refused:
/// a model file always describes at least one fitted domain.
pub fn save_model(mixture: &FittedMixture, path: impl AsRef<Path>) -> Result<()> {
    if mixture.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let repr = model_repr(mixture);
    let mut body = serde_json::to_string_pretty(&repr)?;
    body.push('\n');
    atomic_write(path.as_ref(), &body)
}

/// Load a model file, checking the schema version before anything else and
/// re-validating every invariant on the way in.
pub fn load_model(path: impl AsRef<Path>) -> Result<FittedMixture> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::ModelFile("missing schema_version".into()))?;
    if version != MODEL_SCHEMA_VERSION {
        return Err(Error::SchemaVersionMismatch {
            found: version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let repr: ModelRepr = serde_json::from_value(value)?;
    mixture_from_repr(repr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fit_domain;
    use tempfile::tempdir;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn fixture_mixture() -> FittedMixture {
        let config = InferenceConfig::default();
        let mut mix = FittedMixture::new(2, 2, config.clone()).unwrap();
        for (id, base) in [0.0f64, 7.0].iter().enumerate() {
            let samples = vec![
                LabeledSample::new(ev(&[base + 1.0, 0.25]), Some(id), 0),
                LabeledSample::new(ev(&[base + 1.0, -0.25]), Some(id), 0),
                LabeledSample::new(ev(&[base + 0.1, 1.0]), Some(id), 1),
                LabeledSample::new(ev(&[base - 0.1, 1.3]), Some(id), 1),
            ];
            mix.push_domain(fit_domain(&samples, 2, &config).unwrap())
                .unwrap();
        }
        mix
    }

    #[test]
    fn format_round_trips_awkward_floats() {
        for v in [
            0.1,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.7976931348623157e308,
            -0.0,
            2f64.sqrt(),
        ] {
            let s = format_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s}");
        }
    }

    #[test]
    fn empty_embedding_file_parses_to_no_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "id,domain,class,d0,d1\n").unwrap();
        let file = load_embeddings(&path).unwrap();
        assert_eq!(file.dimension, 2);
        assert!(file.rows.is_empty());
    }

    #[test]
    fn parses_a_data_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.csv");
        std::fs::write(&path, "id,domain,class,d0,d1\n7,0,1,0.5,-1.25\n").unwrap();
        let file = load_embeddings(&path).unwrap();
        assert_eq!(file.rows.len(), 1);
        let row = &file.rows[0];
        assert_eq!(row.id, "7");
        assert_eq!(row.sample.domain_id, Some(0));
        assert_eq!(row.sample.class_id, 1);
        assert_eq!(row.sample.embedding.as_slice(), &[0.5, -1.25]);
    }

    #[test]
    fn unknown_domain_is_minus_one() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ood.csv");
        std::fs::write(&path, "id,domain,class,d0\nx,-1,0,3.5\n").unwrap();
        let file = load_embeddings(&path).unwrap();
        assert_eq!(file.rows[0].sample.domain_id, None);
    }

    #[test]
    fn arity_and_value_errors_name_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,domain,class,d0,d1\n1,0,0,0.5\n").unwrap();
        match load_embeddings(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "id,domain,class,d0\n1,0,0,oops\n").unwrap();
        assert!(matches!(
            load_embeddings(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        std::fs::write(&path, "id,domain,class,d0\n1,-2,0,1.0\n").unwrap();
        assert!(matches!(
            load_embeddings(&path),
            Err(Error::IndexOutOfRange { what: "domain", .. })
        ));
        std::fs::write(&path, "id,domain,class,d0\n1,0,-1,1.0\n").unwrap();
        assert!(matches!(
            load_embeddings(&path),
            Err(Error::IndexOutOfRange { what: "class", .. })
        ));
        std::fs::write(&path, "nope\n").unwrap();
        assert!(matches!(
            load_embeddings(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("round.csv");
        let file = EmbeddingFile {
            dimension: 3,
            rows: vec![
                EmbeddingRow {
                    id: "a0".into(),
                    sample: LabeledSample::new(ev(&[0.1, -2.5, 1.0 / 3.0]), Some(2), 1),
                },
                EmbeddingRow {
                    id: "a1".into(),
                    sample: LabeledSample::new(ev(&[1e-300, 0.0, 3.3]), None, 0),
                },
            ],
        };
        save_embeddings(&path, &file).unwrap();
        let loaded = load_embeddings(&path).unwrap();
        assert_eq!(loaded, file);
    }

    #[test]
    fn model_round_trip_is_bit_exact_and_canonical() {
        let dir = tempdir().unwrap();
        let mix = fixture_mixture();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        save_model(&mix, &p1).unwrap();
        let loaded = load_model(&p1).unwrap();

        assert_eq!(loaded.dimension, mix.dimension);
        assert_eq!(loaded.num_classes, mix.num_classes);
        assert_eq!(loaded.config, mix.config);
        for (a, b) in loaded.domains.iter().zip(&mix.domains) {
            assert_eq!(a.domain_id, b.domain_id);
            for (pa, pb) in a.prototypes.iter().zip(&b.prototypes) {
                for (x, y) in pa.as_slice().iter().zip(pb.as_slice()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            for (ga, gb) in a.gaussians.iter().zip(&b.gaussians) {
                assert_eq!(ga.mu.to_bits(), gb.mu.to_bits());
                assert_eq!(ga.sigma.to_bits(), gb.sigma.to_bits());
                assert_eq!(ga.n, gb.n);
            }
        }

        save_model(&loaded, &p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "second save must be byte-identical"
        );
    }

    #[test]
    fn schema_version_is_checked_first() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v9.json");
        std::fs::write(&path, "{\"schema_version\": 9}\n").unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::SchemaVersionMismatch { found: 9, .. })
        ));
        std::fs::write(&path, "{}\n").unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFile(_))));
    }

    #[test]
    fn empty_mixture_is_refused_at_save() {
        let dir = tempdir().unwrap();
        let mix = FittedMixture::new(2, 2, InferenceConfig::default()).unwrap();
        assert!(matches!(
            save_model(&mix, dir.path().join("e.json")),
            Err(Error::EmptyMixture)
        ));
    }

    #[test]
    fn loaded_model_reproduces_inference_bit_exactly() {
        use crate::ensemble::infer;
        let dir = tempdir().unwrap();
        let mix = fixture_mixture();
        let path = dir.path().join("m.json");
        save_model(&mix, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        for x in [
            ev(&[1.0, 0.0]),
            ev(&[7.5, 1.0]),
            ev(&[-3.0, 2.0]),
            ev(&[100.0, -50.0]),
        ] {
            let a = infer(&x, &mix).unwrap();
            let b = infer(&x, &loaded).unwrap();
            for (pa, pb) in a.posterior.probs.iter().zip(&b.posterior.probs) {
                assert_eq!(pa.to_bits(), pb.to_bits());
            }
            assert_eq!(a.routing.cdf_value.to_bits(), b.routing.cdf_value.to_bits());
        }
    }
}
