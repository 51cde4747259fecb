//! Geometric primitives and sensor models shared by every stage.
//!
//! Conventions: distances in meters, angles in radians, indices zero-based.
//! The LiDAR and robot body frames are x forward, y left, z up. The camera
//! frame is z forward, x right, y down.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used to validate orthonormality and the determinant of rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Points closer than this to the camera plane (or behind it) are not projected.
pub const MIN_PROJECTION_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingedPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub ring_id: u16,
    pub ndvi: Option<f64>,
}

impl RingedPoint {
    pub fn new(x: f64, y: f64, z: f64, ring_id: u16) -> Self {
        Self {
            x,
            y,
            z,
            ring_id,
            ndvi: None,
        }
    }

    #[inline]
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn distance_squared(&self, other: &RingedPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(&self, other: &RingedPoint) -> f64 {
        self.distance_squared(other).sqrt()
    }

    fn with_position(mut self, p: Vector3<f64>) -> Self {
        self.x = p.x;
        self.y = p.y;
        self.z = p.z;
        self
    }
}

/// One LiDAR sweep.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RingedPointCloud {
    pub timestamp: f64,
    pub frame_id: String,
    pub points: Vec<RingedPoint>,
}

impl RingedPointCloud {
    pub fn new(timestamp: f64, frame_id: impl Into<String>, points: Vec<RingedPoint>) -> Self {
        Self {
            timestamp,
            frame_id: frame_id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same header, different points.
    pub fn with_points(&self, points: Vec<RingedPoint>) -> Self {
        Self {
            timestamp: self.timestamp,
            frame_id: self.frame_id.clone(),
            points,
        }
    }
}

/// A proper rigid motion `p' = R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(repr: TransformRepr) -> Result<Self> {
        let r = repr.rotation;
        let rotation = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform::new(rotation, Vector3::from(repr.translation))
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = (rotation.determinant() - 1.0).abs();
        let deviation = ortho.max(det);
        if !deviation.is_finite() || deviation > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation(deviation));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRotation(f64::NAN));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    /// Rotation about +z by `yaw` followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::from_rotation(Rotation3::from_euler_angles(0.0, 0.0, yaw), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }
}

/// Maps every point through `transform`, keeping ring ids and NDVI values.
pub fn transform_cloud(cloud: &RingedPointCloud, transform: &RigidTransform) -> RingedPointCloud {
    let points = cloud
        .points
        .iter()
        .map(|p| p.with_position(transform.apply(&p.position())))
        .collect();
    cloud.with_points(points)
}

/// Pinhole camera with 5-coefficient radial-tangential distortion
/// `(k1, k2, p1, p2, k3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub distortion: [f64; 5],
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    InView { x: u32, y: u32 },
    OutOfView,
}

impl Projection {
    pub fn pixel(self) -> Option<(u32, u32)> {
        match self {
            Projection::InView { x, y } => Some((x, y)),
            Projection::OutOfView => None,
        }
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 200.0,
            fy: 200.0,
            cx: 160.0,
            cy: 120.0,
            distortion: [0.0; 5],
            width: 320,
            height: 240,
        }
    }
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            distortion: [0.0; 5],
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_distortion(mut self, distortion: [f64; 5]) -> Self {
        self.distortion = distortion;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidCamera(
                "principal point must lie inside the image".into(),
            ));
        }
        if self.distortion.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidCamera("non-finite distortion".into()));
        }
        Ok(())
    }

    fn distort(&self, xn: f64, yn: f64) -> (f64, f64) {
        let [k1, k2, p1, p2, k3] = self.distortion;
        let r2 = xn * xn + yn * yn;
        let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        let xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn);
        let yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn;
        (xd, yd)
    }

    /// Continuous pixel coordinates of a camera-frame point, or `None` when it
    /// is behind the camera.
    pub fn project_subpixel(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= MIN_PROJECTION_DEPTH {
            return None;
        }
        let (xd, yd) = self.distort(p.x / p.z, p.y / p.z);
        Some((self.fx * xd + self.cx, self.fy * yd + self.cy))
    }

    pub fn project(&self, p: &Vector3<f64>) -> Projection {
        let Some((u, v)) = self.project_subpixel(p) else {
            return Projection::OutOfView;
        };
        let (u, v) = (u.round(), v.round());
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Projection::InView {
                x: u as u32,
                y: v as u32,
            }
        } else {
            Projection::OutOfView
        }
    }

    /// Viewing ray (camera frame, `z = 1`) through a continuous pixel position.
    /// Distortion is inverted by fixed-point iteration.
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        let xd = (u - self.cx) / self.fx;
        let yd = (v - self.cy) / self.fy;
        if self.distortion.iter().all(|&d| d == 0.0) {
            return Vector3::new(xd, yd, 1.0);
        }
        let (mut xn, mut yn) = (xd, yd);
        for _ in 0..30 {
            let (dx, dy) = self.distort(xn, yn);
            xn -= dx - xd;
            yn -= dy - yd;
        }
        Vector3::new(xn, yn, 1.0)
    }
}

/// Projects a camera-frame point to an integer pixel, rounding to the nearest
/// pixel centre.
pub fn project_point(p: &Vector3<f64>, cam: &CameraModel) -> Projection {
    cam.project(p)
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Planar robot pose with its body-frame twist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_x: f64,
    pub omega: f64,
    /// Set while the global position fix is unreliable.
    #[serde(default)]
    pub degraded: bool,
}

impl RobotPose {
    pub fn new(timestamp: f64, x: f64, y: f64, theta: f64) -> Self {
        Self {
            timestamp,
            x,
            y,
            theta: normalize_angle(theta),
            v_x: 0.0,
            omega: 0.0,
            degraded: false,
        }
    }

    pub fn with_twist(mut self, v_x: f64, omega: f64) -> Self {
        self.v_x = v_x;
        self.omega = omega;
        self
    }

    /// Exact unicycle integration of a constant twist over `dt`.
    pub fn integrate(&self, v_x: f64, omega: f64, dt: f64) -> RobotPose {
        let (x, y) = if omega.abs() < 1e-12 {
            (
                self.x + v_x * dt * self.theta.cos(),
                self.y + v_x * dt * self.theta.sin(),
            )
        } else {
            let r = v_x / omega;
            let th1 = self.theta + omega * dt;
            (
                self.x + r * (th1.sin() - self.theta.sin()),
                self.y + r * (self.theta.cos() - th1.cos()),
            )
        };
        RobotPose {
            timestamp: self.timestamp + dt,
            x,
            y,
            theta: normalize_angle(self.theta + omega * dt),
            v_x,
            omega,
            degraded: self.degraded,
        }
    }

    pub fn body_to_world(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    pub fn world_to_body(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        let d = Vector2::new(p.x - self.x, p.y - self.y);
        Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }
}

/// Mounting of the LiDAR and camera on the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRig {
    /// LiDAR frame expressed in `base_footprint`.
    pub base_from_lidar: RigidTransform,
    /// LiDAR-to-camera extrinsic.
    pub cam_from_lidar: RigidTransform,
    pub camera: CameraModel,
}

impl SensorRig {
    /// LiDAR axis-aligned with the body at `lidar_height`; forward-looking
    /// camera mounted `camera_offset` (LiDAR frame) from it.
    pub fn forward_camera(lidar_height: f64, camera_offset: Vector3<f64>, camera: CameraModel) -> Self {
        // camera x = -lidar y, camera y = -lidar z, camera z = lidar x
        let rotation = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        Self {
            base_from_lidar: RigidTransform::from_translation(Vector3::new(0.0, 0.0, lidar_height)),
            cam_from_lidar: RigidTransform {
                rotation,
                translation: -(rotation * camera_offset),
            },
            camera,
        }
    }

    pub fn lidar_height(&self) -> f64 {
        self.base_from_lidar.translation().z
    }
}

impl Default for SensorRig {
    fn default() -> Self {
        Self::forward_camera(0.5, Vector3::new(0.1, 0.0, -0.15), CameraModel::default())
    }
}
