//! Red / green / near-infrared camera rendering of the analytic scene.

use arbor_core::fusion::RgnFrame;
use arbor_core::{RobotPose, SensorRig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::lidar::lidar_in_world;
use crate::noise::NoiseSpec;
use crate::scene::{Scene, Surface};

/// Combined NIR + red reflectance of every pixel.
pub const REFLECTANCE_SUM: f64 = 0.6;
pub const GREEN_LEVEL: f64 = 0.3;
pub const TRUNK_NDVI: f64 = 0.15;
pub const GROUND_NDVI: f64 = 0.0;
pub const SKY_NDVI: f64 = -0.5;
const SKY_DISTANCE: f64 = 200.0;

/// NIR and red reflectances whose NDVI is exactly `v`, summing to
/// [`REFLECTANCE_SUM`].
pub fn channels_for(v: f64) -> (f64, f64) {
    let v = v.clamp(-1.0, 1.0);
    (REFLECTANCE_SUM * (1.0 + v) / 2.0, REFLECTANCE_SUM * (1.0 - v) / 2.0)
}

/// Renders the frame seen from `pose` (scene frame). Each pixel casts a ray
/// through its center; the hit surface sets the NDVI, with crowns textured by
/// their tree's leaf spread and every pixel perturbed by `ndvi_sigma`.
pub fn render_rgn(scene: &Scene, pose: &RobotPose, rig: &SensorRig, noise: &NoiseSpec, seed: u64) -> RgnFrame {
    let cam = &rig.camera;
    let mut frame = RgnFrame::new(pose.timestamp, cam.width, cam.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lidar_origin, lidar_rot) = lidar_in_world(pose, rig);
    let lidar_from_cam = rig.cam_from_lidar.inverse();
    let origin = lidar_origin + lidar_rot * lidar_from_cam.translation();
    let world_from_cam = lidar_rot * lidar_from_cam.rotation();
    for y in 0..cam.height {
        for x in 0..cam.width {
            let ray = (world_from_cam * cam.unproject(x as f64, y as f64)).normalize();
            let texture: f64 = StandardNormal.sample(&mut rng);
            let jitter: f64 = StandardNormal.sample(&mut rng);
            let base = match scene.cast(&origin, &ray, SKY_DISTANCE).map(|h| h.surface) {
                Some(Surface::Crown(i)) => {
                    let s = &scene.trees[i].shape;
                    s.leaf_ndvi_mean + s.leaf_ndvi_std * texture
                }
                Some(Surface::Trunk(_)) => TRUNK_NDVI,
                Some(Surface::Ground) => GROUND_NDVI,
                None => SKY_NDVI,
            };
            let (nir, red) = channels_for(base + noise.ndvi_sigma * jitter);
            let i = frame.index(x, y);
            frame.nir[i] = nir;
            frame.red[i] = red;
            frame.green[i] = GREEN_LEVEL;
        }
    }
    frame
}
