//! Sensor and positioning noise, and GNSS outage windows.

use arbor_core::RobotPose;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Gaussian LiDAR range noise, meters.
    pub range_sigma: f64,
    /// Random-walk increments of the logged position per scan step, meters.
    pub pose_xy_sigma: f64,
    /// Random-walk increments of the logged heading per scan step, radians.
    pub pose_theta_sigma: f64,
    /// Per-pixel NDVI noise.
    pub ndvi_sigma: f64,
    /// Probability that a LiDAR ray returns nothing.
    pub dropout_prob: f64,
    pub wind_sway_amplitude: f64,
    pub wind_sway_freq: f64,
    /// `[start, end]` times during which GNSS is degraded.
    pub gnss_outages: Vec<[f64; 2]>,
    /// Position error of degraded fixes, meters.
    pub outage_error: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            range_sigma: 0.02,
            pose_xy_sigma: 0.005,
            pose_theta_sigma: 0.0005,
            ndvi_sigma: 0.02,
            dropout_prob: 0.1,
            wind_sway_amplitude: 0.05,
            wind_sway_freq: 0.5,
            gnss_outages: Vec::new(),
            outage_error: 4.0,
        }
    }
}

impl NoiseSpec {
    /// Everything off.
    pub fn zero() -> Self {
        Self {
            range_sigma: 0.0,
            pose_xy_sigma: 0.0,
            pose_theta_sigma: 0.0,
            ndvi_sigma: 0.0,
            dropout_prob: 0.0,
            wind_sway_amplitude: 0.0,
            wind_sway_freq: 0.0,
            gnss_outages: Vec::new(),
            outage_error: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let values = [
            self.range_sigma,
            self.pose_xy_sigma,
            self.pose_theta_sigma,
            self.ndvi_sigma,
            self.dropout_prob,
            self.wind_sway_amplitude,
            self.wind_sway_freq,
            self.outage_error,
        ];
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(SimError::InvalidSpec("noise levels must be non-negative".into()));
        }
        if self.dropout_prob >= 1.0 {
            return Err(SimError::InvalidSpec("dropout_prob must be below 1".into()));
        }
        if self.gnss_outages.iter().any(|[a, b]| !(a <= b)) {
            return Err(SimError::InvalidSpec("outage windows must have start <= end".into()));
        }
        Ok(())
    }

    pub fn degraded_at(&self, t: f64) -> bool {
        self.gnss_outages.iter().any(|&[a, b]| a <= t && t <= b)
    }
}

pub(crate) fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

/// Logged poses: true poses plus a slow random-walk drift on position and
/// heading. Inside outage windows the fix jumps by `outage_error` and carries
/// the degraded flag. Twists are logged exactly.
pub fn log_poses(truth: &[RobotPose], noise: &NoiseSpec, seed: u64) -> Vec<RobotPose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9053_0000);
    let (nxy, nth) = (normal(noise.pose_xy_sigma), normal(noise.pose_theta_sigma));
    let (mut dx, mut dy, mut dth) = (0.0, 0.0, 0.0);
    truth
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if k > 0 {
                dx += nxy.sample(&mut rng);
                dy += nxy.sample(&mut rng);
                dth += nth.sample(&mut rng);
            }
            let mut q = RobotPose {
                x: p.x + dx,
                y: p.y + dy,
                theta: arbor_core::normalize_angle(p.theta + dth),
                ..*p
            };
            if noise.degraded_at(p.timestamp) {
                q.degraded = true;
                q.x += noise.outage_error;
                q.y -= 0.5 * noise.outage_error;
            }
            q
        })
        .collect()
}
