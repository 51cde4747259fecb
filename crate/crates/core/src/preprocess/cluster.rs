use std::collections::HashMap;

use super::{ClusterParams, TreeCluster};
use crate::geometry::RingedPointCloud;

type Cell = (i64, i64, i64);

/// Uniform hash grid with cell size equal to the query radius, so every
/// neighbour of a point lies in the surrounding 27 cells.
struct NeighborGrid {
    cell: f64,
    cells: HashMap<Cell, Vec<u32>>,
}

impl NeighborGrid {
    fn build(cloud: &RingedPointCloud, cell: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in cloud.points.iter().enumerate() {
            cells
                .entry(Self::key(cell, p.x, p.y, p.z))
                .or_default()
                .push(i as u32);
        }
        Self { cell, cells }
    }

    #[inline]
    fn key(cell: f64, x: f64, y: f64, z: f64) -> Cell {
        (
            (x / cell).floor() as i64,
            (y / cell).floor() as i64,
            (z / cell).floor() as i64,
        )
    }

    fn neighbors<'a>(&'a self, x: f64, y: f64, z: f64) -> impl Iterator<Item = u32> + 'a {
        let (cx, cy, cz) = Self::key(self.cell, x, y, z);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                (-1..=1).flat_map(move |dz| {
                    self.cells
                        .get(&(cx + dx, cy + dy, cz + dz))
                        .into_iter()
                        .flatten()
                        .copied()
                })
            })
        })
    }
}

/// Connected components under `dist(p, q) <= cluster_tolerance`.
///
/// Components outside `[min_cluster_points, max_cluster_points]` are dropped.
/// The rest are ordered by descending size (ties by first input index) and
/// numbered in that order; points keep their input order within a cluster.
pub fn euclidean_cluster(cloud: &RingedPointCloud, params: &ClusterParams) -> Vec<TreeCluster> {
    let n = cloud.points.len();
    if n == 0 {
        return Vec::new();
    }
    let tol = params.cluster_tolerance;
    let tol2 = tol * tol;
    let grid = NeighborGrid::build(cloud, tol);

    let mut label = vec![u32::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..n {
        if label[seed] != u32::MAX {
            continue;
        }
        let id = components.len() as u32;
        label[seed] = id;
        stack.push(seed);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let p = &cloud.points[i];
            for j in grid.neighbors(p.x, p.y, p.z) {
                let j = j as usize;
                if label[j] == u32::MAX && p.distance_squared(&cloud.points[j]) <= tol2 {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }

    let mut kept: Vec<Vec<usize>> = components
        .into_iter()
        .filter(|c| (params.min_cluster_points..=params.max_cluster_points).contains(&c.len()))
        .collect();
    kept.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    kept.into_iter()
        .enumerate()
        .map(|(cluster_id, members)| TreeCluster {
            cluster_id,
            source_timestamp: cloud.timestamp,
            points: members.into_iter().map(|i| cloud.points[i]).collect(),
        })
        .collect()
}
