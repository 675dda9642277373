//! Shared numerical helpers: stable softmax and the Gaussian log-density.

/// ln(2π) to full f64 precision.
const LN_TAU: f64 = 1.8378770664093453;

/// Numerically stable softmax: subtracts the maximum before exponentiating,
/// so uniformly shifted inputs produce identical outputs and large negative
/// scores cannot underflow the whole vector to zero.
///
/// Returns `None` when the input is empty or its maximum is not finite
/// (all scores −∞, or any NaN/+∞).
pub fn softmax(scores: &[f64]) -> Option<Vec<f64>> {
    if scores.is_empty() || scores.iter().any(|s| s.is_nan()) {
        return None;
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Some(exps.iter().map(|e| e / total).collect())
}

/// Log-density of the normal distribution N(mu, sigma²) at `x`.
///
/// The caller guarantees `sigma > 0`.
pub fn normal_log_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * LN_TAU
}
