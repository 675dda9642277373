//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector has (near-)zero norm")]
    ZeroNormVector,

    #[error("invalid embedding: {reason}")]
    InvalidEmbedding { reason: &'static str },

    #[error("variance at coordinate {index} must be positive, got {value}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("empty class: at least one sample is required")]
    EmptyClass,

    #[error("class {0} has no samples")]
    MissingClass(usize),

    #[error("expected all samples from domain {expected}, found {found:?}")]
    MixedDomains {
        expected: usize,
        found: Option<usize>,
    },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("mixture contains no domains")]
    EmptyMixture,

    #[error("domain {0} is already fitted")]
    DuplicateDomain(usize),

    #[error("expected next domain id {expected}, got {got}")]
    NonContiguousDomain { expected: usize, got: usize },

    #[error("domain {domain_id} has no class heads (centroid-only model)")]
    MissingClassHeads { domain_id: usize },

    #[error("accuracy matrix entry ({i},{j}) is not populated")]
    IncompleteMatrix { i: usize, j: usize },

    #[error("metric requires at least {needed} domains, got {got}")]
    TooFewDomains { needed: usize, got: usize },

    #[error("cannot place {classes} separated class means in dimension {dimension}")]
    InfeasibleGeometry { classes: usize, dimension: usize },

    #[error("{what} = {value} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        value: i64,
        limit: usize,
    },

    #[error("no evaluation samples for domain {0}")]
    MissingDomainSamples(usize),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unsupported model schema version {found} (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u64 },

    #[error("invalid model file: {0}")]
    ModelFile(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical degeneracy: {0}")]
    Degenerate(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
