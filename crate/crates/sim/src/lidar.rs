//! Spinning multi-ring LiDAR model.

use arbor_core::morphology::LidarVerticalModel;
use arbor_core::{RingedPoint, RingedPointCloud, RobotPose, SensorRig};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::noise::{normal, NoiseSpec};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarSpec {
    pub vertical: LidarVerticalModel,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            vertical: LidarVerticalModel::default(),
            azimuth_step_deg: 0.4,
            max_range: 30.0,
        }
    }
}

impl LidarSpec {
    pub fn azimuth_count(&self) -> usize {
        (360.0 / self.azimuth_step_deg).round() as usize
    }
}

/// World position and orientation of the LiDAR for a body pose in the scene
/// frame.
pub fn lidar_in_world(pose: &RobotPose, rig: &SensorRig) -> (Vector3<f64>, Matrix3<f64>) {
    let yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), pose.theta);
    let rot = yaw.matrix() * rig.base_from_lidar.rotation();
    let origin = Vector3::new(pose.x, pose.y, 0.0) + yaw * rig.base_from_lidar.translation();
    (origin, rot)
}

/// Unit ray of ring `ring` at azimuth `az` in the LiDAR frame.
pub fn ray_direction(elevation: f64, azimuth: f64) -> Vector3<f64> {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vector3::new(ce * ca, ce * sa, se)
}

/// One revolution from `pose` (scene frame), points in the LiDAR frame.
///
/// Rays are cast ring by ring, azimuth by azimuth. Each hit within range is
/// kept unless dropped out, and its range is perturbed by Gaussian noise along
/// the ray. The noise stream is seeded from `seed` alone.
pub fn render_scan(scene: &Scene, pose: &RobotPose, lidar: &LidarSpec, rig: &SensorRig, noise: &NoiseSpec, seed: u64) -> RingedPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range_noise = normal(noise.range_sigma);
    let (origin, rot) = lidar_in_world(pose, rig);
    let n_az = lidar.azimuth_count();
    let step = lidar.azimuth_step_deg.to_radians();
    let mut points = Vec::with_capacity(n_az * lidar.vertical.ring_elevations.len() / 2);
    for (ring, &elev) in lidar.vertical.ring_elevations.iter().enumerate() {
        for a in 0..n_az {
            let d = ray_direction(elev, a as f64 * step);
            let Some(hit) = scene.cast(&origin, &(rot * d), lidar.max_range) else {
                continue;
            };
            // draw both variates for every hit so the stream stays aligned
            let dropped = rng.random::<f64>() < noise.dropout_prob;
            let r = hit.t + range_noise.sample(&mut rng);
            if dropped || r <= 0.0 {
                continue;
            }
            let p = d * r;
            points.push(RingedPoint::new(p.x, p.y, p.z, ring as u16));
        }
    }
    RingedPointCloud::new(pose.timestamp, "lidar", points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchard::{OrchardSpec, TreeShape};
    use crate::scene::{ray_ellipsoid, Wind};

    fn lone_tree(distance: f64) -> OrchardSpec {
        OrchardSpec {
            rows: 1,
            cols: 1,
            origin_x: distance,
            origin_y: 0.0,
            trees: vec![TreeShape::with_size(2.0, 2.62)],
            ..OrchardSpec::default()
        }
    }

    #[test]
    fn flat_ground_stays_flat() {
        let noise = NoiseSpec::default();
        let scene = Scene::new(&OrchardSpec::empty(), &Wind::default(), 0.0);
        let rig = SensorRig::default();
        let cloud = render_scan(&scene, &RobotPose::new(0.0, 0.0, 0.0, 0.3), &LidarSpec::default(), &rig, &noise, 7);
        assert!(!cloud.is_empty());
        for p in &cloud.points {
            let z_world = p.z + rig.lidar_height();
            assert!(z_world.abs() <= 3.0 * noise.range_sigma, "z = {z_world}");
            assert!(p.ring_id < 8, "only downward rings reach the ground");
        }
    }

    #[test]
    fn ray_count_budget() {
        let spec = LidarSpec::default();
        assert_eq!(spec.azimuth_count(), 900);
        assert!(spec.azimuth_count() * 16 <= 14_400);
    }

    #[test]
    fn top_crown_ring_matches_geometry() {
        let orchard = lone_tree(4.0);
        let scene = Scene::new(&orchard, &Wind::default(), 0.0);
        let rig = SensorRig::default();
        let spec = LidarSpec::default();
        let cloud = render_scan(&scene, &RobotPose::new(0.0, 0.0, 0.0, 0.0), &spec, &rig, &NoiseSpec::zero(), 1);
        let shape = orchard.trees[0];
        let center = Vector3::new(4.0, 0.0, shape.crown_center_z());
        let crown_top = |p: &RingedPoint| {
            // crown points lie on the ellipsoid in the world frame
            let w = Vector3::new(p.x, p.y, p.z + rig.lidar_height()) - center;
            let q = (w.x / shape.crown_radius_max).powi(2)
                + (w.y / shape.crown_radius_max).powi(2)
                + (w.z / (shape.crown_height / 2.0)).powi(2);
            (q - 1.0).abs() < 1e-9
        };
        let top = cloud.points.iter().filter(|p| crown_top(p)).map(|p| p.ring_id).max().unwrap();
        // highest ring whose straight-ahead ray meets the crown, from the
        // closed-form intersection with the ellipsoid
        let origin = Vector3::new(0.0, 0.0, rig.lidar_height());
        let expected = (0..16u16)
            .rev()
            .find(|&k| {
                let d = ray_direction(spec.vertical.ring_elevations[k as usize], 0.0);
                ray_ellipsoid(&origin, &d, &center, shape.crown_radius_max, shape.crown_height / 2.0).is_some()
            })
            .unwrap();
        assert_eq!(top, expected);
        let elevation = (shape.height() - rig.lidar_height()).atan2(4.0);
        let quantized = ((elevation.to_degrees() + 15.0) / 2.0).floor() as u16;
        assert_eq!(top, quantized.min(15));
    }

    #[test]
    fn hits_are_exact_without_noise() {
        let orchard = lone_tree(6.0);
        let scene = Scene::new(&orchard, &Wind::default(), 0.0);
        let rig = SensorRig::default();
        let spec = LidarSpec::default();
        let pose = RobotPose::new(0.0, 0.0, 0.0, 0.0);
        let cloud = render_scan(&scene, &pose, &spec, &rig, &NoiseSpec::zero(), 1);
        let (origin, rot) = lidar_in_world(&pose, &rig);
        for p in cloud.points.iter().step_by(97) {
            let v = Vector3::new(p.x, p.y, p.z);
            let hit = scene.cast(&origin, &(rot * v.normalize()), 30.0).unwrap();
            assert!((hit.t - v.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn renders_are_reproducible() {
        let scene = Scene::new(&lone_tree(5.0), &Wind::default(), 0.0);
        let rig = SensorRig::default();
        let pose = RobotPose::new(0.0, 0.0, 0.0, 0.1);
        let a = render_scan(&scene, &pose, &LidarSpec::default(), &rig, &NoiseSpec::zero(), 3);
        let b = render_scan(&scene, &pose, &LidarSpec::default(), &rig, &NoiseSpec::zero(), 3);
        assert_eq!(a, b);
        let n = NoiseSpec::default();
        let c = render_scan(&scene, &pose, &LidarSpec::default(), &rig, &n, 3);
        let d = render_scan(&scene, &pose, &LidarSpec::default(), &rig, &n, 3);
        assert_eq!(c, d);
    }
}
