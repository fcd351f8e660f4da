//! Thin wrappers over the reference distributions used for testing and interval construction.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Quantile of the standard normal distribution.
pub fn normal_quantile(prob: f64) -> f64 {
    std_normal().inverse_cdf(prob)
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Two-sided critical value `z_{1 - alpha/2}`.
pub fn z_two_sided(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0)
}

pub fn chi2_quantile(df: f64, prob: f64) -> f64 {
    ChiSquared::new(df).expect("chi-square df > 0").inverse_cdf(prob)
}

/// Upper tail probability of a chi-square variate.
pub fn chi2_sf(df: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("chi-square df > 0").sf(x)
}

pub fn chi2_pdf(df: f64, x: f64) -> f64 {
    use statrs::distribution::Continuous;
    ChiSquared::new(df).expect("chi-square df > 0").pdf(x)
}

/// Upper tail probability of an F(d1, d2) variate.
pub fn f_sf(d1: f64, d2: f64, x: f64) -> f64 {
    if !x.is_finite() {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    if x <= 0.0 {
        return 1.0;
    }
    FisherSnedecor::new(d1, d2).expect("F df > 0").sf(x)
}

pub fn f_quantile(d1: f64, d2: f64, prob: f64) -> f64 {
    FisherSnedecor::new(d1, d2).expect("F df > 0").inverse_cdf(prob)
}

/// Median of a slice; even lengths use the midpoint of the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}
