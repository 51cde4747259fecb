use nalgebra::{Matrix5, SymmetricEigen};

use super::{ClusterMeasurement, TreeLandmark, NDVI};
use crate::error::{Error, Result};

/// Robot motion over one scan interval: forward speed, yaw rate and duration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EgoMotion {
    pub v_x: f64,
    pub omega: f64,
    pub dt: f64,
}

impl EgoMotion {
    pub fn new(v_x: f64, omega: f64, dt: f64) -> Self {
        Self { v_x, omega, dt }
    }
}

/// Time update. The centroid is carried into the next body frame by rotating
/// it by `-omega·dt` and shifting it back by `v_x·dt`; the state then passes
/// through `F` and the covariance grows by `Q`.
pub fn predict(landmark: &mut TreeLandmark, motion: &EgoMotion) {
    let m = &landmark.model;
    let mut x = m.f * landmark.state;
    let (s, c) = (-motion.omega * motion.dt).sin_cos();
    let (px, py) = (x[0], x[1]);
    x[0] = c * px - s * py - motion.v_x * motion.dt;
    x[1] = s * px + c * py;
    landmark.state = x;
    landmark.covariance = m.f * landmark.covariance * m.f.transpose() + m.q;
}

/// Measurement update at time `timestamp`.
///
/// The NDVI row of the residual is zeroed when the measurement has no NDVI.
/// A landmark without NDVI adopts the first measured value outright with its
/// NDVI variance reset to 1, which is the state a fresh landmark would have.
pub fn kalman_update(
    landmark: &mut TreeLandmark,
    measurement: &ClusterMeasurement,
    timestamp: f64,
) -> Result<()> {
    let model = landmark.model;
    let z = measurement.as_vector();
    let mut y = z - model.h * landmark.state;
    let adopt_ndvi = measurement.ndvi_mean.is_some() && !landmark.ndvi_initialized;
    if measurement.ndvi_mean.is_none() || adopt_ndvi {
        y[NDVI] = 0.0;
    }
    let s = model.h * landmark.covariance * model.h.transpose() + model.r;
    let s_inv = s.cholesky().ok_or(Error::SingularCovariance)?.inverse();
    let k = landmark.covariance * model.h.transpose() * s_inv;
    landmark.state += k * y;
    let p = (Matrix5::identity() - k * model.h) * landmark.covariance;
    landmark.covariance = (p + p.transpose()) * 0.5;

    if adopt_ndvi {
        landmark.state[NDVI] = z[NDVI];
        for i in 0..5 {
            landmark.covariance[(NDVI, i)] = 0.0;
            landmark.covariance[(i, NDVI)] = 0.0;
        }
        landmark.covariance[(NDVI, NDVI)] = 1.0;
        landmark.ndvi_initialized = true;
    }
    landmark.last_seen = timestamp;
    landmark.state_stamp = timestamp;
    landmark.observation_count += 1;
    Ok(())
}

/// Symmetric within `tol` and no eigenvalue below `-tol`.
pub fn covariance_is_valid(p: &Matrix5<f64>, tol: f64) -> bool {
    if !p.iter().all(|v| v.is_finite()) || (p - p.transpose()).amax() > tol {
        return false;
    }
    let eig = SymmetricEigen::new((p + p.transpose()) * 0.5);
    eig.eigenvalues.min() >= -tol
}
