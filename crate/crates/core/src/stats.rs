//! Small statistics helpers for the comparison reports.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided tail probability of a 3 sigma deviation, `2 (1 - Phi(3))`.
pub fn three_sigma_alpha() -> f64 {
    2.0 * standard_normal().cdf(-3.0)
}

pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Per-test `|z|` threshold keeping the family-wise two-sided level at `alpha`
/// over `tests` comparisons.
pub fn bonferroni_threshold(alpha: f64, tests: usize) -> f64 {
    normal_quantile(1.0 - alpha / (2.0 * tests.max(1) as f64))
}

pub fn z_score(expected: f64, estimate: f64, stderr: f64) -> f64 {
    (expected - estimate).abs() / stderr
}
