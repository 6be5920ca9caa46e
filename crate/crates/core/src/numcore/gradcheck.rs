//! Central-difference gradient checking.

use crate::error::NumError;

/// Compares an analytic gradient against central finite differences.
///
/// Returns the maximum over coordinates of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(
    f: F,
    analytic: &[f64],
    point: &[f64],
    step: f64,
) -> Result<f64, NumError>
where
    F: Fn(&[f64]) -> f64,
{
    if step <= 0.0 {
        return Err(NumError::contract("grad_check", "step must be positive"));
    }
    if analytic.len() != point.len() {
        return Err(NumError::dimension(
            "grad_check",
            format!("analytic len {} != point len {}", analytic.len(), point.len()),
        ));
    }
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let f_plus = f(&probe);
        probe[i] = orig - step;
        let f_minus = f(&probe);
        probe[i] = orig;
        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(NumError::NonFinite { op: "grad_check" });
        }
        let numeric = (f_plus - f_minus) / (2.0 * step);
        let denom = 1.0f64.max(analytic[i].abs()).max(numeric.abs());
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

/// Default probe step used across the crate's gradient checks.
pub const DEFAULT_STEP: f64 = 1e-4;
