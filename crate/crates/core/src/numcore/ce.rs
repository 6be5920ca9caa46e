//! Softmax cross-entropy with its gradient.

use crate::error::NumError;

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Cross-entropy of `logits` against a probability vector `target`.
///
/// Returns the loss and its gradient `softmax(logits) - target`. The target
/// must be entrywise non-negative and sum to 1 within 1e-6.
pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), NumError> {
    if logits.len() != target.len() {
        return Err(NumError::dimension(
            "softmax_cross_entropy",
            format!("logits len {} != target len {}", logits.len(), target.len()),
        ));
    }
    let sum: f64 = target.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || target.iter().any(|&t| t < 0.0) {
        return Err(NumError::contract(
            "softmax_cross_entropy",
            format!("target must be a probability vector, sums to {sum}"),
        ));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let dot: f64 = logits.iter().zip(target).map(|(&z, &t)| z * t).sum();
    // With sum(target) = 1: -sum_k t_k log p_k = lse - sum_k t_k z_k.
    // Clamp rounding-level negatives without masking NaN.
    let raw = lse - dot;
    let loss = if raw < 0.0 { 0.0 } else { raw };
    let probs = softmax(logits);
    let grad = probs.iter().zip(target).map(|(&p, &t)| p - t).collect();
    Ok((loss, grad))
}
