//! Scalar helpers for the standard normal distribution and log-space sums.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Natural log of the standard normal CDF, accurate far into both tails.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > 0.0 {
        // Φ(x) = 1 - Φ(-x); ln_1p keeps precision when Φ(-x) is tiny.
        (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x > -20.0 {
        (0.5 * erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let x2 = x * x;
        let inv = 1.0 / x2;
        let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv
            + 105.0 * inv * inv * inv * inv;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// `ln Σ exp(v)`; returns `-inf` for an empty slice or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalize log weights in place into a probability vector.
///
/// Returns `false` (leaving the slice untouched) when every weight is `-inf`
/// or any weight is NaN.
pub fn normalize_log_weights(log_w: &mut [f64]) -> bool {
    if log_w.iter().any(|v| v.is_nan()) {
        return false;
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return false;
    }
    let mut total = 0.0;
    for v in log_w.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    log_w.iter_mut().for_each(|v| *v /= total);
    true
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
