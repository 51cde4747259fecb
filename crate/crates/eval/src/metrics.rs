//! Accuracy metrics over per-tree estimates.

use crate::error::{EvalError, Result};

/// Mean absolute percentage error, in percent, over `(estimate, truth)` pairs.
/// A zero or non-finite truth value is an error, never a skipped pair.
pub fn compute_mape(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(EvalError::Metric("MAPE of an empty set".into()));
    }
    let mut sum = 0.0;
    for &(est, truth) in pairs {
        if truth == 0.0 || !truth.is_finite() || !est.is_finite() {
            return Err(EvalError::Metric(format!("cannot score estimate {est} against ground truth {truth}")));
        }
        sum += ((est - truth) / truth).abs();
    }
    Ok(100.0 * sum / pairs.len() as f64)
}

/// Mean and population standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
