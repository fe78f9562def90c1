use crate::error::{Error, Result};

/// Clipping floor for the detector's log-ratio.
pub const DETECTOR_EPSILON: f64 = 1e-12;

/// Smallest exponential-surrogate risk `a·e^{-φ} + b·e^{φ}` over `φ`,
/// which is `2√(ab)`.
pub fn pointwise_risk(a: f64, b: f64) -> f64 {
    2.0 * (a * b).max(0.0).sqrt()
}

/// `a·e^{-φ} + b·e^{φ}` at a given detector value.
pub fn risk_at(a: f64, b: f64, phi: f64) -> f64 {
    a * (-phi).exp() + b * phi.exp()
}

/// Minimizer of [`risk_at`]: `½ log(a / b)` with both masses floored at
/// [`DETECTOR_EPSILON`].
pub fn log_ratio(a: f64, b: f64) -> f64 {
    0.5 * (a.max(DETECTOR_EPSILON) / b.max(DETECTOR_EPSILON)).ln()
}

/// `Σ_l 2√(p1_l p2_l)`; lies in `[0, 2]` for probability vectors and equals
/// 2 exactly when they coincide.
pub fn surrogate_risk(p1: &[f64], p2: &[f64]) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::LengthMismatch {
            expected: p1.len(),
            found: p2.len(),
        });
    }
    Ok(p1.iter().zip(p2).map(|(&a, &b)| pointwise_risk(a, b)).sum())
}
