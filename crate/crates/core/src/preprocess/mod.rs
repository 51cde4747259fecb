//! Per-scan point cloud preparation: range crop, ground removal, voxel
//! downsampling and Euclidean clustering into tree candidates.

mod cluster;
mod ransac;
mod voxel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RingedPoint, RingedPointCloud};

pub use cluster::euclidean_cluster;
pub use ransac::{fit_ground_plane, remove_ground, Plane};
pub use voxel::downsample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub ransac_distance_threshold: f64,
    pub ransac_iterations: usize,
    /// Smallest fraction of the cloud that must support a plane before it is
    /// treated as ground.
    pub ransac_min_inlier_fraction: f64,
    /// Largest angle between the plane normal and vertical, degrees.
    pub max_ground_tilt_deg: f64,
    pub voxel_leaf: f64,
    pub cluster_tolerance: f64,
    pub min_cluster_points: usize,
    pub max_cluster_points: usize,
    /// Horizontal radius kept around the sensor.
    pub crop_range: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            ransac_distance_threshold: 0.05,
            ransac_iterations: 200,
            ransac_min_inlier_fraction: 0.2,
            max_ground_tilt_deg: 30.0,
            voxel_leaf: 0.10,
            cluster_tolerance: 0.5,
            min_cluster_points: 30,
            max_cluster_points: 50_000,
            crop_range: 20.0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ransac_distance_threshold", self.ransac_distance_threshold),
            ("voxel_leaf", self.voxel_leaf),
            ("cluster_tolerance", self.cluster_tolerance),
            ("crop_range", self.crop_range),
            ("max_ground_tilt_deg", self.max_ground_tilt_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if self.ransac_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "ransac_iterations",
                reason: "must be positive".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.ransac_min_inlier_fraction) {
            return Err(Error::InvalidParameter {
                name: "ransac_min_inlier_fraction",
                reason: "must lie in [0, 1]".into(),
            });
        }
        if self.min_cluster_points == 0 || self.min_cluster_points >= self.max_cluster_points {
            return Err(Error::InvalidParameter {
                name: "min_cluster_points",
                reason: "must be positive and below max_cluster_points".into(),
            });
        }
        Ok(())
    }
}

/// One tree candidate extracted from a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCluster {
    pub cluster_id: usize,
    pub source_timestamp: f64,
    pub points: Vec<RingedPoint>,
}

impl TreeCluster {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Keeps points within `range` of the sensor in the horizontal plane.
pub fn crop_range(cloud: &RingedPointCloud, range: f64) -> RingedPointCloud {
    let r2 = range * range;
    cloud.with_points(
        cloud
            .points
            .iter()
            .filter(|p| p.x * p.x + p.y * p.y <= r2)
            .copied()
            .collect(),
    )
}

/// Derives the RANSAC seed of a scan from the run seed and its timestamp.
pub fn scan_seed(base: u64, timestamp: f64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ timestamp.to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Crop, ground removal, downsampling and clustering of an already colorized
/// cloud.
pub fn compute_clusters(
    cloud: &RingedPointCloud,
    params: &ClusterParams,
    seed: u64,
) -> Result<Vec<TreeCluster>> {
    let cropped = crop_range(cloud, params.crop_range);
    let above_ground = if cropped.len() >= 3 {
        remove_ground(&cropped, params, scan_seed(seed, cloud.timestamp))?
    } else {
        cropped
    };
    let reduced = downsample(&above_ground, params.voxel_leaf)?;
    Ok(euclidean_cluster(&reduced, params))
}
