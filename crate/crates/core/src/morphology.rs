//! Tree height from top-ring transitions and width from z-sliced farthest
//! point pairs. Both estimates are running maxima over a landmark's lifetime.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::association::TreeLandmark;
use crate::error::{Error, Result};
use crate::preprocess::TreeCluster;

/// Vertical layout of a multi-ring LiDAR. Ring `k` has elevation
/// `ring_elevations[k]`, so higher ring ids look further up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarVerticalModel {
    pub ring_count: u16,
    pub ring_elevations: Vec<f64>,
    /// Height of the LiDAR origin above the ground contact plane.
    pub sensor_height: f64,
}

impl Default for LidarVerticalModel {
    fn default() -> Self {
        Self::vlp16(0.5)
    }
}

impl LidarVerticalModel {
    /// 16 rings from -15° to +15° in 2° steps.
    pub fn vlp16(sensor_height: f64) -> Self {
        Self {
            ring_count: 16,
            ring_elevations: (0..16).map(|k| (-15.0 + 2.0 * k as f64).to_radians()).collect(),
            sensor_height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ring_count == 0 || self.ring_elevations.len() != self.ring_count as usize {
            return Err(Error::InvalidParameter {
                name: "ring_elevations",
                reason: format!(
                    "expected {} elevations, got {}",
                    self.ring_count,
                    self.ring_elevations.len()
                ),
            });
        }
        if self.ring_elevations.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter {
                name: "ring_elevations",
                reason: "must be strictly increasing".into(),
            });
        }
        if !self.sensor_height.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sensor_height",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    pub fn max_ring(&self) -> u16 {
        self.ring_count - 1
    }
}

/// Updates the landmark height from one cluster in the LiDAR frame and returns
/// the height this scan supports, if any.
///
/// A scan yields a height `z_top + sensor_height` when its top ring rises above
/// every ring seen before, or when the top ring is below the highest sensor
/// ring so the crown apex lies inside the field of view.
pub fn estimate_height(
    cluster: &TreeCluster,
    landmark: &mut TreeLandmark,
    model: &LidarVerticalModel,
) -> Option<f64> {
    let top_ring = cluster.points.iter().map(|p| p.ring_id).max()?;
    let z_top = cluster
        .points
        .iter()
        .map(|p| p.z)
        .fold(f64::NEG_INFINITY, f64::max);
    let rises = landmark.top_ring_seen.is_none_or(|seen| top_ring > seen);
    let apex_in_view = top_ring < model.max_ring();
    if rises {
        landmark.top_ring_seen = Some(top_ring);
    }
    if apex_in_view {
        landmark.apex_in_view_seen = true;
    }
    if !(rises || apex_in_view) {
        return None;
    }
    let h = z_top + model.sensor_height;
    landmark.height_est = landmark.height_est.max(h);
    Some(h)
}

/// Updates the landmark width from one cluster and returns this scan's width:
/// the largest farthest-pair distance over `n_slices` equal z-bins spanning the
/// cluster's own vertical extent.
pub fn estimate_width(cluster: &TreeCluster, landmark: &mut TreeLandmark, n_slices: usize) -> f64 {
    let w = sliced_width(&cluster.points.iter().map(|p| p.position()).collect::<Vec<_>>(), n_slices);
    landmark.width_est = landmark.width_est.max(w);
    w
}

/// Max over z-slices of the per-slice farthest-pair distance. Bins with fewer
/// than two points contribute 0.
pub fn sliced_width(points: &[Vector3<f64>], n_slices: usize) -> f64 {
    if points.len() < 2 || n_slices == 0 {
        return 0.0;
    }
    let (z_min, z_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
    let extent = z_max - z_min;
    let bins = if extent > 0.0 { n_slices } else { 1 };
    let mut slices: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); bins];
    for p in points {
        let k = if extent > 0.0 {
            (((p.z - z_min) / extent * bins as f64).floor() as usize).min(bins - 1)
        } else {
            0
        };
        slices[k].push(*p);
    }
    slices
        .iter()
        .map(|s| farthest_pair(s).map_or(0.0, |(_, _, d)| d))
        .fold(0.0, f64::max)
}

#[inline]
fn pair_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm()
}

/// Exact farthest pair `(i, j, distance)` with `i < j`, or `None` for fewer
/// than two points.
///
/// Points are visited in decreasing distance from the centroid; since
/// `|a - b| <= r_a + r_b`, a pair whose radii sum cannot beat the best found so
/// far ends the inner scan, and the outer scan stops once even the two largest
/// remaining radii cannot. Distances are computed exactly as in a brute-force
/// scan, so the result is identical.
pub fn farthest_pair(points: &[Vector3<f64>]) -> Option<(usize, usize, f64)> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let centroid = points.iter().sum::<Vector3<f64>>() / n as f64;
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - centroid).norm(), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    // radii carry rounding error; inflate the bound so pruning never discards a
    // pair that could win
    let slack = 1e-12 * (1.0 + order[0].0);

    let mut best = (0, 1, pair_distance(&points[0], &points[1]));
    for a in 0..n - 1 {
        let (ra, i) = order[a];
        if ra + order[a + 1].0 + slack < best.2 {
            break;
        }
        for &(rb, j) in &order[a + 1..] {
            if ra + rb + slack < best.2 {
                break;
            }
            let d = pair_distance(&points[i], &points[j]);
            let (lo, hi) = (i.min(j), i.max(j));
            if d > best.2 || (d == best.2 && (lo, hi) < (best.0, best.1)) {
                best = (lo, hi, d);
            }
        }
    }
    Some(best)
}

/// O(n²) reference for [`farthest_pair`].
pub fn farthest_pair_brute_force(points: &[Vector3<f64>]) -> Option<(usize, usize, f64)> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let mut best = (0, 1, pair_distance(&points[0], &points[1]));
    for i in 0..n {
        for j in i + 1..n {
            let d = pair_distance(&points[i], &points[j]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{ClusterMeasurement, FilterModel};
    use crate::geometry::RingedPoint;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn cluster(points: Vec<RingedPoint>) -> TreeCluster {
        TreeCluster {
            cluster_id: 0,
            source_timestamp: 0.0,
            points,
        }
    }

    fn landmark() -> TreeLandmark {
        let m = ClusterMeasurement {
            cluster_id: 0,
            centroid: Vector3::new(4.0, 0.0, 1.0),
            num_pt: 100,
            ndvi_mean: None,
        };
        TreeLandmark::from_measurement(0, &m, 0.0, FilterModel::default())
    }

    #[test]
    fn vlp16_layout() {
        let m = LidarVerticalModel::default();
        m.validate().unwrap();
        assert_eq!(m.max_ring(), 15);
        assert!((m.ring_elevations[0] + 15f64.to_radians()).abs() < 1e-12);
        assert!((m.ring_elevations[15] - 15f64.to_radians()).abs() < 1e-12);
        let bad = LidarVerticalModel {
            ring_count: 3,
            ring_elevations: vec![0.1, 0.0, 0.2],
            sensor_height: 0.5,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn height_from_rising_ring() {
        let model = LidarVerticalModel::default();
        let mut l = landmark();
        let c = cluster(vec![RingedPoint::new(4.0, 0.0, 1.2, 14), RingedPoint::new(4.0, 0.0, 0.3, 10)]);
        assert_eq!(estimate_height(&c, &mut l, &model), Some(1.7));
        assert_eq!(l.top_ring_seen, Some(14));
        assert_eq!(l.height_est, 1.7);
        assert!(!l.fov_limited());
    }

    #[test]
    fn unchanged_when_top_ring_repeats_at_fov_edge() {
        let model = LidarVerticalModel::default();
        let mut l = landmark();
        estimate_height(&cluster(vec![RingedPoint::new(4.0, 0.0, 1.0, 15)]), &mut l, &model);
        let before = l.height_est;
        let c = cluster(vec![RingedPoint::new(3.0, 0.0, 1.4, 15)]);
        assert_eq!(estimate_height(&c, &mut l, &model), None);
        assert_eq!(l.height_est, before);
        assert!(l.fov_limited());
    }

    #[test]
    fn running_max_keeps_larger_height() {
        let model = LidarVerticalModel::default();
        let mut l = landmark();
        estimate_height(&cluster(vec![RingedPoint::new(4.0, 0.0, 2.0, 12)]), &mut l, &model);
        estimate_height(&cluster(vec![RingedPoint::new(4.0, 0.0, 1.5, 12)]), &mut l, &model);
        assert_eq!(l.height_est, 2.5);
    }

    fn cylinder(radius: f64, n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let a = r.random_range(0.0..TAU);
                Vector3::new(radius * a.cos(), radius * a.sin(), r.random_range(0.0..2.0))
            })
            .collect()
    }

    #[test]
    fn dense_cylinder_width() {
        let pts = cylinder(1.355, 4000, 3);
        let w = sliced_width(&pts, 10);
        assert!((w - 2.71).abs() < 0.02, "width {w}");
    }

    #[test]
    fn single_point_contributes_nothing() {
        let mut l = landmark();
        l.width_est = 1.0;
        let w = estimate_width(&cluster(vec![RingedPoint::new(1.0, 1.0, 1.0, 0)]), &mut l, 10);
        assert_eq!(w, 0.0);
        assert_eq!(l.width_est, 1.0);
    }

    #[test]
    fn flat_cluster_uses_one_bin() {
        let pts = vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(3.0, 4.0, 1.0)];
        assert_eq!(sliced_width(&pts, 10), 5.0);
    }

    proptest! {
        #[test]
        fn accelerated_pair_matches_brute_force(pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 0..500)) {
            let pts: Vec<_> = pts.into_iter().map(Vector3::from).collect();
            let fast = farthest_pair(&pts).map(|(_, _, d)| d);
            let slow = farthest_pair_brute_force(&pts).map(|(_, _, d)| d);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn sliced_width_bounded_by_global_pair(pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 2..500)) {
            let pts: Vec<_> = pts.into_iter().map(Vector3::from).collect();
            let global = farthest_pair_brute_force(&pts).unwrap().2;
            prop_assert!(sliced_width(&pts, 10) <= global);
        }

        #[test]
        fn width_invariant_under_yaw(pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 2..300), yaw in 0.0f64..TAU) {
            let pts: Vec<_> = pts.into_iter().map(Vector3::from).collect();
            let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
            let turned: Vec<_> = pts.iter().map(|p| rot * p).collect();
            prop_assert!((sliced_width(&pts, 10) - sliced_width(&turned, 10)).abs() < 1e-9);
        }

        #[test]
        fn estimates_are_monotone(scans in prop::collection::vec(prop::collection::vec((prop::array::uniform3(-3.0f64..3.0), 0u16..16), 1..80), 1..10)) {
            let model = LidarVerticalModel::default();
            let mut l = landmark();
            for scan in scans {
                let c = cluster(scan.iter().map(|&([x, y, z], r)| RingedPoint::new(x, y, z, r)).collect());
                let (h0, w0) = (l.height_est, l.width_est);
                let z_top = c.points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
                if let Some(h) = estimate_height(&c, &mut l, &model) {
                    prop_assert!(h <= z_top + model.sensor_height);
                }
                estimate_width(&c, &mut l, 10);
                prop_assert!(l.height_est >= h0 && l.width_est >= w0);
            }
        }
    }
}
