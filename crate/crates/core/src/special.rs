//! Special functions.

use crate::error::{domain, Result};

/// Natural logarithm of the Gamma function for `x > 0`.
///
/// Backed by the fdlibm algorithm (via `libm`), which keeps relative accuracy
/// near the zeros at 1 and 2 where Lanczos sums lose it.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("log_gamma requires x > 0, got {x}"));
    }
    Ok(libm::lgamma(x))
}

/// Surface area of the unit sphere in R^d, 2 pi^{d/2} / Gamma(d/2).
pub fn sphere_area(d: u32) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * (h * std::f64::consts::PI.ln() - libm::lgamma(h)).exp()
}
