//! Deterministic synthetic orchard survey: trees, robot paths, LiDAR scans,
//! RGN camera frames, logged poses and ground truth.
//!
//! Scenes are analytic (flat ground, cylinder trunks, ellipsoid crowns), so
//! every sensor sample is an exact ray intersection before noise. All output
//! is a pure function of the configuration and seed.

// Negated comparisons are deliberate: validation must reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod lidar;
pub mod noise;
pub mod orchard;
pub mod scene;
pub mod trajectory;

use arbor_core::fusion::RgnFrame;
use arbor_core::georef::FieldMap;
use arbor_core::{RingedPointCloud, RobotPose, SensorRig};
use serde::{Deserialize, Serialize};

pub use error::{Result, SimError};
pub use lidar::LidarSpec;
pub use noise::NoiseSpec;
pub use orchard::{OrchardSpec, PlacedTree, TreeShape};
pub use scene::{Scene, Surface, Wind};
pub use trajectory::{PathKind, TrajectorySpec};

/// Everything a simulated survey depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SimConfig {
    pub orchard: OrchardSpec,
    pub trajectory: TrajectorySpec,
    pub noise: NoiseSpec,
    pub lidar: LidarSpec,
    pub seed: u64,
}

/// Stream-specific seed for item `index`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SCAN_STREAM: u64 = 1;
const FRAME_STREAM: u64 = 2;

/// A planned survey. Scans and frames are rendered on demand.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: SimConfig,
    pub rig: SensorRig,
    /// True poses in the orchard frame.
    local: Vec<RobotPose>,
    truth: Vec<RobotPose>,
    logged: Vec<RobotPose>,
}

impl Simulation {
    /// Plans the trajectory with the default sensor rig at the LiDAR model's
    /// sensor height.
    pub fn new(config: SimConfig) -> Result<Self> {
        let rig = SensorRig {
            base_from_lidar: arbor_core::RigidTransform::from_translation(nalgebra::Vector3::new(
                0.0,
                0.0,
                config.lidar.vertical.sensor_height,
            )),
            ..SensorRig::default()
        };
        Self::with_rig(config, rig)
    }

    pub fn with_rig(config: SimConfig, rig: SensorRig) -> Result<Self> {
        config.orchard.validate()?;
        config.noise.validate()?;
        config.lidar.vertical.validate()?;
        rig.camera.validate()?;
        if !(config.lidar.azimuth_step_deg > 0.0 && config.lidar.max_range > 0.0) {
            return Err(SimError::InvalidSpec("LiDAR azimuth step and range must be positive".into()));
        }
        let local = trajectory::generate_trajectory(&config.trajectory, &config.orchard, config.seed)?;
        let datum = config.orchard.datum;
        let truth: Vec<RobotPose> = local
            .iter()
            .map(|p| RobotPose {
                x: p.x + datum.origin_x,
                y: p.y + datum.origin_y,
                ..*p
            })
            .collect();
        let logged = noise::log_poses(&truth, &config.noise, config.seed);
        Ok(Self {
            config,
            rig,
            local,
            truth,
            logged,
        })
    }

    pub fn scan_count(&self) -> usize {
        self.local.len()
    }

    pub fn scan_time(&self, k: usize) -> f64 {
        self.local[k].timestamp
    }

    /// True UTM poses, one per scan.
    pub fn true_poses(&self) -> &[RobotPose] {
        &self.truth
    }

    /// Poses as a GNSS/odometry log would report them, one per scan.
    pub fn logged_poses(&self) -> &[RobotPose] {
        &self.logged
    }

    pub fn ground_truth(&self) -> FieldMap {
        self.config.orchard.ground_truth()
    }

    fn wind(&self) -> Wind {
        Wind {
            amplitude: self.config.noise.wind_sway_amplitude,
            freq: self.config.noise.wind_sway_freq,
            direction: [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
        }
    }

    pub fn scene_at(&self, t: f64) -> Scene {
        Scene::new(&self.config.orchard, &self.wind(), t)
    }

    pub fn scan(&self, k: usize) -> RingedPointCloud {
        let pose = &self.local[k];
        lidar::render_scan(
            &self.scene_at(pose.timestamp),
            pose,
            &self.config.lidar,
            &self.rig,
            &self.config.noise,
            derive_seed(self.config.seed, SCAN_STREAM, k as u64),
        )
    }

    pub fn frame_count(&self) -> usize {
        let span = self.local.last().map_or(0.0, |p| p.timestamp) - self.local[0].timestamp;
        (span * self.config.trajectory.frame_rate + 1e-9).floor() as usize + 1
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        self.local[0].timestamp + i as f64 / self.config.trajectory.frame_rate
    }

    pub fn frame(&self, i: usize) -> RgnFrame {
        let t = self.frame_time(i);
        let pose = trajectory::pose_at(&self.local, t);
        let mut frame = camera::render_rgn(
            &self.scene_at(t),
            &pose,
            &self.rig,
            &self.config.noise,
            derive_seed(self.config.seed, FRAME_STREAM, i as u64),
        );
        frame.timestamp = t;
        frame
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_survey_shape() {
        let sim = Simulation::new(SimConfig::default()).unwrap();
        assert_eq!(sim.scan_count(), 461);
        assert_eq!(sim.frame_count(), 1381);
        assert!((sim.frame_time(3) - sim.scan_time(1)).abs() < 1e-12);
        let gt = sim.ground_truth();
        assert_eq!(gt.len(), 6);
        let p0 = sim.true_poses()[0];
        assert!((p0.x - 652_000.0).abs() < 1e-9);
    }

    #[test]
    fn scans_are_deterministic() {
        let sim = Simulation::new(SimConfig::default()).unwrap();
        assert_eq!(sim.scan(100), sim.scan(100));
        assert_ne!(sim.scan(100), sim.scan(101));
        let again = Simulation::new(SimConfig::default()).unwrap();
        assert_eq!(sim.scan(37), again.scan(37));
        assert_eq!(sim.logged_poses(), again.logged_poses());
    }

    #[test]
    fn scan_size_within_budget() {
        let sim = Simulation::new(SimConfig::default()).unwrap();
        for k in [0, 200, 460] {
            assert!(sim.scan(k).len() <= 14_400);
        }
    }
}
