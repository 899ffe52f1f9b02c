//! Small numeric helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Two-sided critical value `z` with `P(|Z| <= z) = level`.
///
/// `level` must lie in `[0, 1)`; `level = 0` gives `z = 0`.
pub fn z_critical(level: f64) -> f64 {
    assert!((0.0..1.0).contains(&level), "confidence level {level} outside [0, 1)");
    if level == 0.0 {
        return 0.0;
    }
    std_normal().inverse_cdf(0.5 + level / 2.0)
}

/// Two-sided normal p-value of a z statistic.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Logistic function, kept strictly inside (0, 1).
///
/// In f64 the exact value rounds to 1 for `eta > ~37`; the result is
/// clamped to `[f64::MIN_POSITIVE, 1 - EPSILON/2]`.
pub fn logistic(eta: f64) -> f64 {
    let p = if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Linear-interpolated sample quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
