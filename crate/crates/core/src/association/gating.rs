use nalgebra::Vector5;

use super::{ClusterMeasurement, TreeLandmark, NDVI, STATE_DIM};
use crate::error::{Error, Result};

/// Scale applied to the Mahalanobis length before exponentiation.
pub const DISTANCE_SCALE: f64 = 0.1;

/// Per-component relative residual `(m - H x̂) / max(|H x̂|, epsilon)`.
///
/// The NDVI component is zero unless both the measurement and the landmark
/// carry NDVI.
pub fn normalized_innovation(
    measurement: &ClusterMeasurement,
    landmark: &TreeLandmark,
    epsilon: &[f64; STATE_DIM],
) -> Vector5<f64> {
    let predicted = landmark.model.h * landmark.state;
    let z = measurement.as_vector();
    let mut i = Vector5::from_fn(|c, _| (z[c] - predicted[c]) / predicted[c].abs().max(epsilon[c]));
    if measurement.ndvi_mean.is_none() || !landmark.ndvi_initialized {
        i[NDVI] = 0.0;
    }
    i
}

/// `exp(-0.1 · sqrt(iᵀ S⁻¹ i))` with `S = H P Hᵀ + R`.
pub fn match_probability(innovation: &Vector5<f64>, landmark: &TreeLandmark) -> Result<f64> {
    let m = &landmark.model;
    let s = m.h * landmark.covariance * m.h.transpose() + m.r;
    let chol = s.cholesky().ok_or(Error::SingularCovariance)?;
    let d2 = innovation.dot(&chol.solve(innovation)).max(0.0);
    Ok((-DISTANCE_SCALE * d2.sqrt()).exp())
}

/// Shannon entropy of the normalized probabilities in base `M`, so a uniform
/// list scores 1 and a single candidate scores 0.
pub fn association_entropy(probabilities: &[f64]) -> Result<f64> {
    if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::DegenerateInput(
            "probabilities must be finite and non-negative".into(),
        ));
    }
    let total: f64 = probabilities.iter().sum();
    if probabilities.is_empty() || total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let m = probabilities.len();
    if m == 1 {
        return Ok(0.0);
    }
    let h: f64 = probabilities
        .iter()
        .map(|p| p / total)
        .filter(|&q| q > 0.0)
        .map(|q| -q * q.ln())
        .sum();
    Ok((h / (m as f64).ln()).clamp(0.0, 1.0))
}
