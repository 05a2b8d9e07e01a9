//! Log-space gamma and beta helpers.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

// Past this argument the Stirling difference is used for Γ(t+a)/Γ(t).
const STIRLING_MIN: f64 = 10.0;

pub fn ln_gamma_checked(x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(ln_gamma(x))
    } else {
        Err(Error::Domain(format!(
            "log-gamma needs a positive argument, got {x}"
        )))
    }
}

/// Tail of Stirling's series, `ln Γ(x) - [(x - 1/2) ln x - x + ln(2π)/2]`.
fn stirling_tail(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 / 1188.0))))
}

/// `ln Γ(t + a) - ln Γ(t)` for `t > 0`, `t + a > 0`.
pub fn ln_gamma_ratio(t: f64, a: f64) -> Result<f64> {
    let shifted = t + a;
    if !(t > 0.0 && shifted > 0.0 && t.is_finite() && a.is_finite()) {
        return Err(Error::Domain(format!(
            "gamma ratio needs t > 0 and t + a > 0, got t={t} a={a}"
        )));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    if t.min(shifted) < STIRLING_MIN {
        return Ok(ln_gamma(shifted) - ln_gamma(t));
    }
    // (t+a-1/2) ln(t+a) - (t-1/2) ln t, regrouped to avoid cancellation
    let main = (t - 0.5) * (a / t).ln_1p() + a * shifted.ln();
    Ok(main - a + stirling_tail(shifted) - stirling_tail(t))
}

/// `Γ(t + a) / Γ(t)`. Small integer shifts are evaluated as exact products.
pub fn gamma_ratio(t: f64, a: f64) -> Result<f64> {
    let ln = ln_gamma_ratio(t, a)?;
    if a.fract() == 0.0 && a.abs() <= 64.0 {
        let steps = a.abs() as u32;
        let product: f64 = if a > 0.0 {
            (0..steps).map(|j| t + j as f64).product()
        } else {
            (1..=steps).map(|j| t - j as f64).product()
        };
        if product.is_finite() && product != 0.0 {
            return Ok(if a > 0.0 { product } else { 1.0 / product });
        }
    }
    Ok(ln.exp())
}

/// Leading behavior `t^a` of `Γ(t + a) / Γ(t)` for large `t`.
pub fn gamma_ratio_asymptotic(t: f64, a: f64) -> f64 {
    t.powf(a)
}

/// `ln B(x, y)` for `x, y > 0`.
pub fn ln_beta(x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::Domain(format!(
            "beta needs positive arguments, got ({x}, {y})"
        )));
    }
    let (big, small) = if x >= y { (x, y) } else { (y, x) };
    Ok(ln_gamma(small) - ln_gamma_ratio(big, small)?)
}
