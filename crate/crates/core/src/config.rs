//! Inference configuration: gate threshold, weighting kernel, ensembling policy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance kernel used to derive ensemble mixture weights.
///
/// `L2Gmm` is the default: weights are normalized Gaussian densities of the
/// per-domain nearest-prototype L2 distances. The remaining variants are
/// ablation kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    L1,
    L2,
    #[serde(rename = "maha")]
    MahalanobisDiag,
    Uniform,
    #[default]
    #[serde(rename = "l2gmm")]
    L2Gmm,
}

impl DistanceMode {
    pub const ALL: [DistanceMode; 5] = [
        DistanceMode::Uniform,
        DistanceMode::L1,
        DistanceMode::L2,
        DistanceMode::MahalanobisDiag,
        DistanceMode::L2Gmm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceMode::L1 => "l1",
            DistanceMode::L2 => "l2",
            DistanceMode::MahalanobisDiag => "maha",
            DistanceMode::Uniform => "uniform",
            DistanceMode::L2Gmm => "l2gmm",
        }
    }
}

impl fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(DistanceMode::L1),
            "l2" => Ok(DistanceMode::L2),
            "maha" => Ok(DistanceMode::MahalanobisDiag),
            "uniform" => Ok(DistanceMode::Uniform),
            "l2gmm" => Ok(DistanceMode::L2Gmm),
            other => Err(Error::InvalidConfig(format!(
                "unknown distance mode '{other}' (expected l1|l2|maha|uniform|l2gmm)"
            ))),
        }
    }
}

/// Which classification branch `infer` takes.
///
/// `Hybrid` follows the gate: single-domain classification for samples the
/// gate accepts as in-distribution, mixture ensembling otherwise. The other
/// two variants force one branch unconditionally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    #[default]
    Hybrid,
    #[serde(rename = "single")]
    AlwaysSingle,
    #[serde(rename = "ensemble")]
    AlwaysEnsemble,
}

impl EnsembleMode {
    pub const ALL: [EnsembleMode; 3] = [
        EnsembleMode::AlwaysSingle,
        EnsembleMode::AlwaysEnsemble,
        EnsembleMode::Hybrid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnsembleMode::Hybrid => "hybrid",
            EnsembleMode::AlwaysSingle => "single",
            EnsembleMode::AlwaysEnsemble => "ensemble",
        }
    }
}

impl fmt::Display for EnsembleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(EnsembleMode::Hybrid),
            "single" => Ok(EnsembleMode::AlwaysSingle),
            "ensemble" => Ok(EnsembleMode::AlwaysEnsemble),
            other => Err(Error::InvalidConfig(format!(
                "unknown ensemble mode '{other}' (expected hybrid|single|ensemble)"
            ))),
        }
    }
}

/// Model-wide inference knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Gate threshold: a sample is in-distribution when the CDF of its
    /// routed distance is at most `q`. Must lie strictly in (0, 1).
    pub q: f64,
    /// Kernel used for ensemble mixture weights.
    pub distance_mode: DistanceMode,
    /// Branch policy for `infer`.
    pub ensemble_mode: EnsembleMode,
    /// Softmax scale for the cosine classifier; 1.0 reproduces the plain
    /// cosine-softmax posterior.
    pub temperature: f64,
    /// Project embeddings to unit L2 norm before prototype fitting and
    /// distance computation. Off by default.
    pub normalize_embeddings: bool,
    /// Lower bound applied to fitted standard deviations so densities and
    /// CDFs stay well-defined for single-sample or zero-spread classes.
    pub sigma_floor: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            q: 0.94,
            distance_mode: DistanceMode::default(),
            ensemble_mode: EnsembleMode::default(),
            temperature: 1.0,
            normalize_embeddings: false,
            sigma_floor: 1e-6,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "q must lie strictly in (0, 1), got {}",
                self.q
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma_floor must be positive and finite, got {}",
                self.sigma_floor
            )));
        }
        Ok(())
    }
}
