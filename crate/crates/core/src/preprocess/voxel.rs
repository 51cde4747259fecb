use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::RingedPointCloud;

type VoxelKey = (i64, i64, i64);

#[inline]
fn voxel_key(x: f64, y: f64, z: f64, leaf: f64) -> VoxelKey {
    (
        (x / leaf).floor() as i64,
        (y / leaf).floor() as i64,
        (z / leaf).floor() as i64,
    )
}

/// Voxel-grid reduction. Each occupied voxel keeps the input point nearest its
/// centroid, so ring ids and NDVI values are real measurements. Output is
/// ordered by voxel key.
pub fn downsample(cloud: &RingedPointCloud, leaf: f64) -> Result<RingedPointCloud> {
    if !(leaf > 0.0 && leaf.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "voxel_leaf",
            reason: format!("must be positive, got {leaf}"),
        });
    }
    let mut voxels: BTreeMap<VoxelKey, Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        voxels.entry(voxel_key(p.x, p.y, p.z, leaf)).or_default().push(i);
    }

    let points = voxels
        .values()
        .map(|members| {
            let centroid = members
                .iter()
                .fold(Vector3::zeros(), |acc, &i| acc + cloud.points[i].position())
                / members.len() as f64;
            let nearest = members
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = (cloud.points[a].position() - centroid).norm_squared();
                    let db = (cloud.points[b].position() - centroid).norm_squared();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("voxel has members");
            cloud.points[nearest]
        })
        .collect();
    Ok(cloud.with_points(points))
}
