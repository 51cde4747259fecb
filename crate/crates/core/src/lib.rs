//! Real-time tree detection, landmark association and geometric trait
//! estimation from a 3D LiDAR fused with a red/green/near-infrared camera.
//!
//! Data flows through the modules in this order:
//!
//! 1. [`fusion`] computes NDVI from RGN frames and attaches it to LiDAR points.
//! 2. [`preprocess`] crops, removes the ground plane, downsamples and clusters.
//! 3. [`association`] keeps one Kalman filter per tree and matches clusters to
//!    them with a Mahalanobis probability and an entropy ambiguity test.
//! 4. [`morphology`] refines per-tree height and width.
//! 5. [`georef`] maps landmarks into the UTM-anchored field map.

// Negated comparisons are deliberate: validation must reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod georef;
pub mod morphology;
pub mod preprocess;

pub use error::{Error, Result};
pub use geometry::{
    normalize_angle, project_point, transform_cloud, CameraModel, Projection, RigidTransform,
    RingedPoint, RingedPointCloud, RobotPose, SensorRig,
};
