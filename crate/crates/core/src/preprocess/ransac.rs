use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClusterParams;
use crate::error::{Error, Result};
use crate::geometry::{RingedPoint, RingedPointCloud};

/// Plane `normal · p + offset = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    fn through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let norm = n.norm();
        if norm < 1e-9 {
            return None;
        }
        let normal = n / norm;
        Some(Self {
            normal,
            offset: -normal.dot(a),
        })
    }

    #[inline]
    pub fn distance(&self, p: &RingedPoint) -> f64 {
        (self.normal.x * p.x + self.normal.y * p.y + self.normal.z * p.z + self.offset).abs()
    }

    /// Angle between the normal and the z axis, ignoring orientation.
    pub fn tilt(&self) -> f64 {
        self.normal.z.abs().min(1.0).acos()
    }

    fn least_squares(points: &[RingedPoint], inliers: &[usize]) -> Option<Self> {
        if inliers.len() < 3 {
            return None;
        }
        let n = inliers.len() as f64;
        let centroid = inliers
            .iter()
            .fold(Vector3::zeros(), |acc, &i| acc + points[i].position())
            / n;
        let mut cov = Matrix3::zeros();
        for &i in inliers {
            let d = points[i].position() - centroid;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let k = eig.eigenvalues.imin();
        let normal = eig.eigenvectors.column(k).into_owned().normalize();
        normal.iter().all(|v| v.is_finite()).then(|| Self {
            normal,
            offset: -normal.dot(&centroid),
        })
    }

    fn inliers(&self, points: &[RingedPoint], threshold: f64) -> Vec<usize> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| self.distance(p) <= threshold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Dominant plane by seeded RANSAC, refined by a least-squares refit on its
/// inliers. Returns the plane and its inlier indices, or `None` when no plane
/// reaches the inlier quorum.
pub fn fit_ground_plane(
    cloud: &RingedPointCloud,
    params: &ClusterParams,
    seed: u64,
) -> Result<Option<(Plane, Vec<usize>)>> {
    let points = &cloud.points;
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!(
            "plane fit needs at least 3 points, got {n}"
        )));
    }
    let threshold = params.ransac_distance_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Plane, usize)> = None;

    for _ in 0..params.ransac_iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let Some(plane) = Plane::through(
            &points[i].position(),
            &points[j].position(),
            &points[k].position(),
        ) else {
            continue;
        };
        let count = points.iter().filter(|p| plane.distance(p) <= threshold).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
        }
    }

    let quorum = (params.ransac_min_inlier_fraction * n as f64).ceil().max(3.0) as usize;
    let Some((plane, count)) = best else {
        return Ok(None);
    };
    if count < quorum {
        return Ok(None);
    }
    let mut inliers = plane.inliers(points, threshold);
    let mut plane = plane;
    if let Some(refit) = Plane::least_squares(points, &inliers) {
        let refit_inliers = refit.inliers(points, threshold);
        if refit_inliers.len() >= inliers.len() {
            plane = refit;
            inliers = refit_inliers;
        }
    }
    Ok(Some((plane, inliers)))
}

/// Removes the dominant plane when it is within the tilt limit of horizontal;
/// otherwise the cloud is returned unchanged.
pub fn remove_ground(
    cloud: &RingedPointCloud,
    params: &ClusterParams,
    seed: u64,
) -> Result<RingedPointCloud> {
    let Some((plane, inliers)) = fit_ground_plane(cloud, params, seed)? else {
        return Ok(cloud.clone());
    };
    if plane.tilt() > params.max_ground_tilt_deg.to_radians() {
        return Ok(cloud.clone());
    }
    let mut ground = vec![false; cloud.len()];
    for i in inliers {
        ground[i] = true;
    }
    Ok(cloud.with_points(
        cloud
            .points
            .iter()
            .zip(ground)
            .filter(|(_, g)| !g)
            .map(|(p, _)| *p)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Ground plane (ring 0) plus an upright cylinder (ring 1).
    fn plane_and_cylinder(seed: u64) -> RingedPointCloud {
        let mut r = rng(seed);
        let mut pts = Vec::new();
        for _ in 0..1000 {
            pts.push(RingedPoint::new(
                r.random_range(-5.0..5.0),
                r.random_range(-5.0..5.0),
                r.random_range(-0.01..0.01),
                0,
            ));
        }
        for _ in 0..500 {
            let a = r.random_range(0.0..TAU);
            pts.push(RingedPoint::new(
                2.0 + 0.4 * a.cos(),
                1.0 + 0.4 * a.sin(),
                r.random_range(0.2..2.5),
                1,
            ));
        }
        RingedPointCloud::new(0.0, "lidar", pts)
    }

    #[test]
    fn removes_ground_keeps_cylinder() {
        for seed in 0..5 {
            let cloud = plane_and_cylinder(seed);
            let out = remove_ground(&cloud, &ClusterParams::default(), seed).unwrap();
            let ground_left = out.points.iter().filter(|p| p.ring_id == 0).count();
            let cyl_left = out.points.iter().filter(|p| p.ring_id == 1).count();
            assert!(ground_left <= 10, "ground left: {ground_left}");
            assert!(cyl_left >= 495, "cylinder kept: {cyl_left}");
        }
    }

    #[test]
    fn unstructured_cloud_is_unchanged() {
        let mut r = rng(3);
        let pts = (0..800)
            .map(|_| {
                RingedPoint::new(
                    r.random_range(-3.0..3.0),
                    r.random_range(-3.0..3.0),
                    r.random_range(1.0..4.0),
                    0,
                )
            })
            .collect();
        let cloud = RingedPointCloud::new(0.0, "lidar", pts);
        let out = remove_ground(&cloud, &ClusterParams::default(), 1).unwrap();
        assert_eq!(out, cloud);
    }

    #[test]
    fn vertical_wall_is_unchanged() {
        let mut r = rng(4);
        let pts = (0..1000)
            .map(|_| {
                RingedPoint::new(
                    2.0 + r.random_range(-0.005..0.005),
                    r.random_range(-5.0..5.0),
                    r.random_range(0.0..3.0),
                    0,
                )
            })
            .collect();
        let cloud = RingedPointCloud::new(0.0, "lidar", pts);
        let (plane, _) = fit_ground_plane(&cloud, &ClusterParams::default(), 2)
            .unwrap()
            .unwrap();
        assert!(plane.normal.x.abs() > 0.99);
        let out = remove_ground(&cloud, &ClusterParams::default(), 2).unwrap();
        assert_eq!(out, cloud);
    }

    #[test]
    fn too_few_points() {
        let cloud = RingedPointCloud::new(
            0.0,
            "lidar",
            vec![RingedPoint::new(0.0, 0.0, 0.0, 0), RingedPoint::new(1.0, 0.0, 0.0, 0)],
        );
        assert!(matches!(
            remove_ground(&cloud, &ClusterParams::default(), 0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cloud = plane_and_cylinder(9);
        let a = remove_ground(&cloud, &ClusterParams::default(), 42).unwrap();
        let b = remove_ground(&cloud, &ClusterParams::default(), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_is_subset_of_input() {
        let cloud = plane_and_cylinder(11);
        let out = remove_ground(&cloud, &ClusterParams::default(), 5).unwrap();
        assert!(out.points.iter().all(|p| cloud.points.contains(p)));
    }
}
