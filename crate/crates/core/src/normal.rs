//! Standard normal density, distribution function and Mills ratio.

use statrs::function::erf::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `φ(x) / Φ(x)`. Below `x = -6` both factors underflow together, so the
/// ratio comes from the continued fraction of `Φ(x)/φ(x)` instead.
pub fn mills_ratio(x: f64) -> f64 {
    if x >= -6.0 {
        return pdf(x) / cdf(x);
    }
    let t = -x;
    let mut acc = t;
    for k in (1..=60).rev() {
        acc = t + k as f64 / acc;
    }
    acc
}
