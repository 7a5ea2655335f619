//! Evaluation metrics and repetition summaries.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Smallest variance used when scoring log-loss.
pub const VARIANCE_FLOOR: f64 = 1e-12;

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("mse of an empty set".into()));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).powi(2))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Negative log density of `y` under `N(mean, variance)`.
pub fn gaussian_log_loss(y: f64, mean: f64, variance: f64) -> Result<f64> {
    if variance.is_nan() || variance <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "log-loss needs a positive variance, got {variance}"
        )));
    }
    Ok(0.5 * (2.0 * PI * variance).ln() + (y - mean).powi(2) / (2.0 * variance))
}

/// Mean log-loss over a test set, flooring variances at [`VARIANCE_FLOOR`].
pub fn mean_gaussian_log_loss(targets: &[f64], means: &[f64], variances: &[f64]) -> Result<f64> {
    if targets.len() != means.len() || targets.len() != variances.len() || targets.is_empty() {
        return Err(Error::InvalidArgument(
            "log-loss inputs must be non-empty and of equal length".into(),
        ));
    }
    let mut total = 0.0;
    for ((&y, &m), &v) in targets.iter().zip(means).zip(variances) {
        total += gaussian_log_loss(y, m, v.max(VARIANCE_FLOOR))?;
    }
    Ok(total / targets.len() as f64)
}

/// Percentage improvement of a candidate's risk over a baseline's:
/// `(baseline − candidate) / baseline × 100`.
pub fn pi_risk(risk_candidate: f64, risk_baseline: f64) -> Result<f64> {
    if risk_baseline == 0.0 {
        return Err(Error::InvalidArgument(
            "percentage improvement is undefined for a zero baseline risk".into(),
        ));
    }
    Ok((risk_baseline - risk_candidate) / risk_baseline * 100.0)
}

/// Mean and standard error of the mean (sample sd / √n; zero when n = 1).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Median and its large-sample standard error, `√(π/2) · sd / √n`.
pub fn median_and_se(values: &[f64]) -> (f64, f64) {
    let (_, se_mean) = mean_and_se(values);
    (median(values), (PI / 2.0).sqrt() * se_mean)
}
