//! Per-tree Kalman landmarks and cluster-to-landmark correspondence.
//!
//! Each tree is a 5-state filter `[x, y, z, num_pt, ndvi]` in the robot body
//! frame. A cluster is matched to the landmark with the highest probability
//! `exp(-0.1 · d_M)`, where `d_M` is the Mahalanobis length of the normalized
//! innovation, provided the probability clears `th_p` and the base-M entropy of
//! the normalized candidate probabilities stays below `th_h`.

mod bank;
mod gating;
mod kalman;

use nalgebra::{Matrix5, Vector3, Vector5};
use serde::{Deserialize, Serialize};

use crate::geometry::RigidTransform;
use crate::preprocess::TreeCluster;

pub use bank::{AssociationResult, ClusterDiagnostics, Decision, LandmarkBank};
pub use gating::{association_entropy, match_probability, normalized_innovation, DISTANCE_SCALE};
pub use kalman::{covariance_is_valid, kalman_update, predict, EgoMotion};

pub type LandmarkId = u64;

pub const STATE_DIM: usize = 5;
pub const NUM_PT: usize = 3;
pub const NDVI: usize = 4;

/// Features of one cluster, in the robot body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterMeasurement {
    pub cluster_id: usize,
    pub centroid: Vector3<f64>,
    pub num_pt: usize,
    pub ndvi_mean: Option<f64>,
}

impl ClusterMeasurement {
    /// Centroid, size and mean NDVI of `cluster`, whose points are in the LiDAR
    /// frame; `base_from_lidar` maps the centroid into the body frame.
    pub fn from_cluster(cluster: &TreeCluster, base_from_lidar: &RigidTransform) -> Self {
        let n = cluster.points.len().max(1) as f64;
        let centroid = cluster
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.position())
            / n;
        let (sum, count) = cluster
            .points
            .iter()
            .filter_map(|p| p.ndvi)
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        Self {
            cluster_id: cluster.cluster_id,
            centroid: base_from_lidar.apply(&centroid),
            num_pt: cluster.points.len(),
            ndvi_mean: (count > 0).then(|| (sum / count as f64).clamp(-1.0, 1.0)),
        }
    }

    /// `[x, y, z, num_pt, ndvi]`, with NDVI 0 when absent.
    pub fn as_vector(&self) -> Vector5<f64> {
        Vector5::new(
            self.centroid.x,
            self.centroid.y,
            self.centroid.z,
            self.num_pt as f64,
            self.ndvi_mean.unwrap_or(0.0),
        )
    }
}

/// Linear models of one landmark filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub f: Matrix5<f64>,
    pub h: Matrix5<f64>,
    pub q: Matrix5<f64>,
    pub r: Matrix5<f64>,
}

impl Default for FilterModel {
    fn default() -> Self {
        Self {
            f: Matrix5::identity(),
            h: Matrix5::identity(),
            q: Matrix5::identity(),
            r: Matrix5::identity() * 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeLandmark {
    pub id: LandmarkId,
    pub state: Vector5<f64>,
    pub covariance: Matrix5<f64>,
    pub model: FilterModel,
    /// False until a measurement with NDVI has been absorbed.
    pub ndvi_initialized: bool,
    pub created_at: f64,
    pub last_seen: f64,
    /// Time whose body frame the state is expressed in.
    pub state_stamp: f64,
    pub observation_count: u32,
    pub height_est: f64,
    pub width_est: f64,
    pub top_ring_seen: Option<u16>,
    /// Whether any observation had its top ring below the sensor's highest ring.
    pub apex_in_view_seen: bool,
}

impl TreeLandmark {
    /// New filter initialized at the measurement with unit covariance.
    pub fn from_measurement(id: LandmarkId, m: &ClusterMeasurement, timestamp: f64, model: FilterModel) -> Self {
        Self {
            id,
            state: m.as_vector(),
            covariance: Matrix5::identity(),
            model,
            ndvi_initialized: m.ndvi_mean.is_some(),
            created_at: timestamp,
            last_seen: timestamp,
            state_stamp: timestamp,
            observation_count: 1,
            height_est: 0.0,
            width_est: 0.0,
            top_ring_seen: None,
            apex_in_view_seen: false,
        }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        Vector3::new(self.state[0], self.state[1], self.state[2])
    }

    pub fn ndvi(&self) -> Option<f64> {
        self.ndvi_initialized.then_some(self.state[NDVI])
    }

    /// True while every observation had the cluster top on the highest ring,
    /// so the apex was never inside the vertical field of view.
    pub fn fov_limited(&self) -> bool {
        self.top_ring_seen.is_some() && !self.apex_in_view_seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    /// Minimum match probability.
    pub th_p: f64,
    /// Maximum normalized entropy across candidate probabilities.
    pub th_h: f64,
    /// Per-component floors of the innovation normalizer.
    pub epsilon: [f64; STATE_DIM],
    /// Horizontal radius around a cluster centroid within which landmarks are
    /// considered candidates.
    pub candidate_radius: f64,
    /// Landmarks unseen for longer than this (seconds) ...
    pub prune_after: f64,
    /// ... and observed fewer times than this are dropped.
    pub prune_min_observations: u32,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            th_p: 0.5,
            th_h: 0.8,
            epsilon: [0.5, 0.5, 0.5, 10.0, 0.05],
            candidate_radius: 2.0,
            prune_after: 30.0,
            prune_min_observations: 3,
        }
    }
}
