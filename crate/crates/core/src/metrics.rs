//! Continual-learning evaluation metrics over an accuracy matrix.
//!
//! Entry `(i, j)` of the matrix is the accuracy on domain `i` measured after
//! `j + 1` domains have been fitted (both indices 0-based here). Entries
//! with `i > j` are evaluations on domains not yet seen at that step; they
//! are populated by the synthetic protocol because the unseen-domain metric
//! needs them. Accuracies are stored as fractions in [0, 1]; percentage
//! formatting is a presentation concern.

use crate::error::{Error, Result};

/// N×N accuracy matrix. Unpopulated entries are NaN; each metric checks
/// that the entries it consumes are present.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    num_domains: usize,
    /// Row-major `[i * n + j]`.
    values: Vec<f64>,
}

impl AccuracyMatrix {
    pub fn new(num_domains: usize) -> Self {
        Self {
            num_domains,
            values: vec![f64::NAN; num_domains * num_domains],
        }
    }

    /// Build from rows; entries may be NaN (unpopulated) but populated
    /// entries must be valid accuracies.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut m = AccuracyMatrix::new(n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            for (j, v) in row.into_iter().enumerate() {
                if !v.is_nan() {
                    m.set(i, j, v)?;
                }
            }
        }
        Ok(m)
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    pub fn get(&self, domain: usize, step: usize) -> f64 {
        self.values[domain * self.num_domains + step]
    }

    pub fn set(&mut self, domain: usize, step: usize, accuracy: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::InvalidConfig(format!(
                "accuracy must lie in [0, 1], got {accuracy}"
            )));
        }
        self.values[domain * self.num_domains + step] = accuracy;
        Ok(())
    }

    fn require(&self, i: usize, j: usize) -> Result<f64> {
        let v = self.get(i, j);
        if v.is_nan() {
            return Err(Error::IncompleteMatrix { i, j });
        }
        Ok(v)
    }

    /// Mean accuracy over all domains at the final step.
    pub fn average_accuracy(&self) -> Result<f64> {
        let last = self.num_domains - 1;
        let mut sum = 0.0;
        for i in 0..self.num_domains {
            sum += self.require(i, last)?;
        }
        Ok(sum / self.num_domains as f64)
    }

    /// Mean backward-transfer degradation: for every domain `i` seen before
    /// the final step, average `A[i][j] - A[i][i]` over the later steps
    /// `j > i`, then average over those domains. Zero means no forgetting;
    /// negative means performance on old domains dropped.
    ///
    /// The per-domain normalizer is the number of summed terms (N−1−i in
    /// 0-based indices), so the last contributing domain with its single
    /// term is averaged correctly.
    pub fn average_forgetting(&self) -> Result<f64> {
        let n = self.num_domains;
        if n < 2 {
            return Err(Error::TooFewDomains { needed: 2, got: n });
        }
        let mut total = 0.0;
        for i in 0..n - 1 {
            let own = self.require(i, i)?;
            let mut bwt = 0.0;
            for j in i + 1..n {
                bwt += self.require(i, j)? - own;
            }
            total += bwt / (n - 1 - i) as f64;
        }
        Ok(total / (n - 1) as f64)
    }

    /// Mean accuracy on not-yet-seen domains, averaged over steps: at each
    /// step `j` before the last, average `A[i][j]` over the domains `i > j`,
    /// then average those step means.
    pub fn cumulative_unseen_accuracy(&self) -> Result<f64> {
        let n = self.num_domains;
        if n < 2 {
            return Err(Error::TooFewDomains { needed: 2, got: n });
        }
        let mut total = 0.0;
        for j in 0..n - 1 {
            let mut step_sum = 0.0;
            for i in j + 1..n {
                step_sum += self.require(i, j)?;
            }
            total += step_sum / (n - 1 - j) as f64;
        }
        Ok(total / (n - 1) as f64)
    }

    /// Rows as plain vectors (NaN where unpopulated).
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_domains)
            .map(|i| (0..self.num_domains).map(|j| self.get(i, j)).collect())
            .collect()
    }
}
