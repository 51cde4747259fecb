//! Global registration of landmarks against a georeferenced tree map.
//!
//! Landmark states live in the robot body frame at their scan time. The UTM
//! pose at that time places them on the map, where the nearest registry tree
//! takes over the landmark's trait estimates. While poses are flagged as
//! degraded, per-scan snapshots are buffered and replayed on recovery with
//! dead-reckoned poses, so the local bank never stalls.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::association::{LandmarkId, TreeLandmark};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, RobotPose};

pub type TreeId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoTreeRecord {
    pub tree_id: TreeId,
    pub utm_x: f64,
    pub utm_y: f64,
    pub gt_width: Option<f64>,
    pub gt_height: Option<f64>,
    pub est_width: f64,
    pub est_height: f64,
    pub est_ndvi_mean: Option<f64>,
    pub last_update: Option<f64>,
    pub match_count: u32,
}

impl GeoTreeRecord {
    pub fn new(tree_id: TreeId, utm_x: f64, utm_y: f64) -> Self {
        Self {
            tree_id,
            utm_x,
            utm_y,
            gt_width: None,
            gt_height: None,
            est_width: 0.0,
            est_height: 0.0,
            est_ndvi_mean: None,
            last_update: None,
            match_count: 0,
        }
    }
}

/// UTM zone and the offset of a local survey frame: `utm = local + origin`.
/// Poses are expected in UTM, so registration itself never applies it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Datum {
    pub zone: u8,
    pub north: bool,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl Datum {
    pub fn to_utm(&self, local: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(local.x + self.origin_x, local.y + self.origin_y)
    }

    pub fn to_local(&self, utm: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(utm.x - self.origin_x, utm.y - self.origin_y)
    }
}

/// Registry of trees, sorted by id, with a uniform grid over UTM positions.
#[derive(Debug, Clone)]
pub struct FieldMap {
    pub datum: Datum,
    records: Vec<GeoTreeRecord>,
    index: GridIndex,
}

impl PartialEq for FieldMap {
    fn eq(&self, other: &Self) -> bool {
        self.datum == other.datum && self.records == other.records
    }
}

impl FieldMap {
    pub fn new(datum: Datum, mut records: Vec<GeoTreeRecord>) -> Result<Self> {
        records.sort_by_key(|r| r.tree_id);
        if let Some(w) = records.windows(2).find(|w| w[0].tree_id == w[1].tree_id) {
            return Err(Error::InvalidParameter {
                name: "tree_id",
                reason: format!("duplicate id {}", w[0].tree_id),
            });
        }
        if let Some(r) = records
            .iter()
            .find(|r| !(r.utm_x.is_finite() && r.utm_y.is_finite()))
        {
            return Err(Error::InvalidParameter {
                name: "utm",
                reason: format!("tree {} has a non-finite position", r.tree_id),
            });
        }
        let index = GridIndex::build(&records);
        Ok(Self {
            datum,
            records,
            index,
        })
    }

    pub fn records(&self) -> &[GeoTreeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, tree_id: TreeId) -> Option<&GeoTreeRecord> {
        self.position(tree_id).map(|i| &self.records[i])
    }

    fn position(&self, tree_id: TreeId) -> Option<usize> {
        self.records.binary_search_by_key(&tree_id, |r| r.tree_id).ok()
    }

    /// Smallest planar distance between two records, or `None` below two.
    pub fn min_spacing(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.records.iter().enumerate() {
            for b in &self.records[i + 1..] {
                let d = (a.utm_x - b.utm_x).hypot(a.utm_y - b.utm_y);
                best = Some(best.map_or(d, |x| x.min(d)));
            }
        }
        best
    }

    /// Nearest record to a UTM point and its distance; ties go to the lower
    /// tree id.
    pub fn nearest(&self, utm: &Vector2<f64>) -> Result<(TreeId, f64)> {
        if self.records.is_empty() {
            return Err(Error::EmptyMap);
        }
        let (i, d) = self.index.nearest(&self.records, utm);
        Ok((self.records[i].tree_id, d))
    }

    /// Linear-scan reference for [`FieldMap::nearest`].
    pub fn nearest_linear(&self, utm: &Vector2<f64>) -> Result<(TreeId, f64)> {
        let mut best: Option<(TreeId, f64)> = None;
        for r in &self.records {
            let d = record_distance(r, utm);
            if best.is_none_or(|(id, bd)| d < bd || (d == bd && r.tree_id < id)) {
                best = Some((r.tree_id, d));
            }
        }
        best.ok_or(Error::EmptyMap)
    }
}

#[inline]
fn record_distance(r: &GeoTreeRecord, p: &Vector2<f64>) -> f64 {
    (r.utm_x - p.x).hypot(r.utm_y - p.y)
}

type CellKey = (i64, i64);

#[derive(Debug, Clone, Default)]
struct GridIndex {
    cell: f64,
    cells: HashMap<CellKey, Vec<usize>>,
    lo: CellKey,
    hi: CellKey,
}

impl GridIndex {
    fn build(records: &[GeoTreeRecord]) -> Self {
        if records.is_empty() {
            return Self::default();
        }
        let (mut min, mut max) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
        for r in records {
            min = min.inf(&Vector2::new(r.utm_x, r.utm_y));
            max = max.sup(&Vector2::new(r.utm_x, r.utm_y));
        }
        // about one record per cell on a uniform layout
        let area = ((max.x - min.x) * (max.y - min.y)).max(0.0);
        let span = (max.x - min.x).max(max.y - min.y);
        let cell = if area > 0.0 {
            (area / records.len() as f64).sqrt()
        } else if span > 0.0 {
            span / records.len() as f64
        } else {
            1.0
        };
        let mut index = Self {
            cell,
            cells: HashMap::new(),
            lo: (i64::MAX, i64::MAX),
            hi: (i64::MIN, i64::MIN),
        };
        for (i, r) in records.iter().enumerate() {
            let k = index.key(r.utm_x, r.utm_y);
            index.lo = (index.lo.0.min(k.0), index.lo.1.min(k.1));
            index.hi = (index.hi.0.max(k.0), index.hi.1.max(k.1));
            index.cells.entry(k).or_default().push(i);
        }
        index
    }

    fn key(&self, x: f64, y: f64) -> CellKey {
        ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64)
    }

    /// Visits square rings of cells around the query until the ring's inner
    /// edge is farther than the best hit. Requires at least one record.
    fn nearest(&self, records: &[GeoTreeRecord], p: &Vector2<f64>) -> (usize, f64) {
        let q = self.key(
            p.x.clamp(self.lo.0 as f64 * self.cell, (self.hi.0 + 1) as f64 * self.cell),
            p.y.clamp(self.lo.1 as f64 * self.cell, (self.hi.1 + 1) as f64 * self.cell),
        );
        let max_ring = [q.0 - self.lo.0, self.hi.0 - q.0, q.1 - self.lo.1, self.hi.1 - q.1]
            .into_iter()
            .max()
            .unwrap_or(0)
            .max(0);
        // distance from the query to its projection onto the grid's bounding box
        let outside = {
            let cx = p.x.clamp(self.lo.0 as f64 * self.cell, (self.hi.0 + 1) as f64 * self.cell);
            let cy = p.y.clamp(self.lo.1 as f64 * self.cell, (self.hi.1 + 1) as f64 * self.cell);
            (p.x - cx).hypot(p.y - cy)
        };
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            if let Some((_, d)) = best {
                // records in ring k or beyond are at least (k - 1) cells from
                // the clamped query, and the clamp offset is orthogonal to that
                let inner = (ring - 1).max(0) as f64 * self.cell;
                if d < inner.hypot(outside) - 1e-12 * (1.0 + d) {
                    break;
                }
            }
            for cx in q.0 - ring..=q.0 + ring {
                for cy in q.1 - ring..=q.1 + ring {
                    if (cx - q.0).abs() != ring && (cy - q.1).abs() != ring {
                        continue;
                    }
                    for &i in self.cells.get(&(cx, cy)).into_iter().flatten() {
                        let d = record_distance(&records[i], p);
                        let better = best.is_none_or(|(bi, bd)| {
                            d < bd || (d == bd && records[i].tree_id < records[bi].tree_id)
                        });
                        if better {
                            best = Some((i, d));
                        }
                    }
                }
            }
        }
        best.expect("index holds at least one record")
    }
}

/// Body-frame planar point to the map frame through `pose`.
pub fn to_global(body_xy: &Vector2<f64>, pose: &RobotPose) -> Vector2<f64> {
    pose.body_to_world(body_xy)
}

/// Landmark centroid to the map frame; `pose` must be the pose at the
/// landmark's state time.
pub fn landmark_to_global(landmark: &TreeLandmark, pose: &RobotPose) -> Vector2<f64> {
    to_global(&Vector2::new(landmark.state[0], landmark.state[1]), pose)
}

/// Trait estimates of one landmark frozen at a scan, enough to replay its
/// registry update later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkSnapshot {
    pub landmark_id: LandmarkId,
    pub body_xy: Vector2<f64>,
    pub stamp: f64,
    pub width: f64,
    pub height: f64,
    pub ndvi: Option<f64>,
    pub observation_count: u32,
}

impl LandmarkSnapshot {
    pub fn of(landmark: &TreeLandmark) -> Self {
        Self {
            landmark_id: landmark.id,
            body_xy: Vector2::new(landmark.state[0], landmark.state[1]),
            stamp: landmark.state_stamp,
            width: landmark.width_est,
            height: landmark.height_est,
            ndvi: landmark.ndvi(),
            observation_count: landmark.observation_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome {
    pub landmark_id: LandmarkId,
    /// UTM position of the landmark.
    pub utm: Vector2<f64>,
    pub nearest: TreeId,
    pub distance: f64,
    /// False when the nearest tree was beyond `max_match_dist`.
    pub assigned: bool,
}

/// Writes the snapshot's estimates into the nearest record within
/// `max_match_dist` of `utm`. Positions and ground truth are never touched.
pub fn match_and_update(
    snapshot: &LandmarkSnapshot,
    utm: &Vector2<f64>,
    map: &mut FieldMap,
    max_match_dist: f64,
) -> Result<MatchOutcome> {
    let (tree_id, distance) = map.nearest(utm)?;
    let assigned = distance <= max_match_dist;
    if assigned {
        let i = map.position(tree_id).expect("nearest returns a live id");
        let r = &mut map.records[i];
        r.est_width = snapshot.width;
        r.est_height = snapshot.height;
        if snapshot.ndvi.is_some() {
            r.est_ndvi_mean = snapshot.ndvi;
        }
        r.last_update = Some(snapshot.stamp);
        r.match_count += 1;
    }
    Ok(MatchOutcome {
        landmark_id: snapshot.landmark_id,
        utm: *utm,
        nearest: tree_id,
        distance,
        assigned,
    })
}

/// Time-ordered pose samples with interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    poses: Vec<RobotPose>,
    pub max_gap: f64,
}

impl PoseTrack {
    pub const DEFAULT_MAX_GAP: f64 = 0.5;

    pub fn new(poses: Vec<RobotPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::DegenerateInput("pose track is empty".into()));
        }
        if poses.windows(2).any(|w| !(w[0].timestamp < w[1].timestamp)) {
            return Err(Error::DegenerateInput(
                "pose timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            poses,
            max_gap: Self::DEFAULT_MAX_GAP,
        })
    }

    pub fn poses(&self) -> &[RobotPose] {
        &self.poses
    }

    /// Pose at `t`: exact sample when one matches, otherwise linear in
    /// position and shortest-arc in heading between the bracketing samples,
    /// with the later sample's twist and either sample's degraded flag.
    /// Outside the track the nearest end sample is used. Fails when no sample
    /// lies within `max_gap` of `t`.
    pub fn interpolate(&self, t: f64) -> Result<RobotPose> {
        let i = self.poses.partition_point(|p| p.timestamp < t);
        let nearest_gap = [i.checked_sub(1), (i < self.poses.len()).then_some(i)]
            .into_iter()
            .flatten()
            .map(|k| (self.poses[k].timestamp - t).abs())
            .fold(f64::INFINITY, f64::min);
        if !(nearest_gap <= self.max_gap) {
            return Err(Error::StalePose {
                timestamp: t,
                max_gap: self.max_gap,
            });
        }
        if i == self.poses.len() {
            return Ok(self.poses[i - 1]);
        }
        if i == 0 || self.poses[i].timestamp == t {
            return Ok(self.poses[i]);
        }
        let (a, b) = (&self.poses[i - 1], &self.poses[i]);
        let s = (t - a.timestamp) / (b.timestamp - a.timestamp);
        Ok(RobotPose {
            timestamp: t,
            x: a.x + s * (b.x - a.x),
            y: a.y + s * (b.y - a.y),
            theta: normalize_angle(a.theta + s * normalize_angle(b.theta - a.theta)),
            v_x: b.v_x,
            omega: b.omega,
            degraded: a.degraded || b.degraded,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoConfig {
    /// Orphan gate; half the minimum record spacing when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_match_dist: Option<f64>,
    /// Landmarks observed fewer times are considered tentative and never
    /// written to the registry.
    pub min_observations: u32,
}

impl Default for GeoConfig {
    fn default() -> Self {
        Self {
            max_match_dist: None,
            min_observations: 3,
        }
    }
}

#[derive(Debug, Clone)]
struct PendingScan {
    timestamp: f64,
    v_x: f64,
    omega: f64,
    snapshots: Vec<LandmarkSnapshot>,
}

/// Registry writer that tolerates degraded positioning.
#[derive(Debug, Clone)]
pub struct GeoRegistrar {
    map: FieldMap,
    pub config: GeoConfig,
    max_match_dist: f64,
    last_good: Option<RobotPose>,
    backlog: Vec<PendingScan>,
    /// Latest tree each landmark was assigned to.
    pub assignments: BTreeMap<LandmarkId, TreeId>,
    /// Landmarks whose latest match fell outside the gate.
    pub orphans: BTreeSet<LandmarkId>,
}

impl GeoRegistrar {
    pub fn new(map: FieldMap, config: GeoConfig) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::EmptyMap);
        }
        let max_match_dist = match config.max_match_dist {
            Some(d) if d > 0.0 => d,
            Some(d) => {
                return Err(Error::InvalidParameter {
                    name: "max_match_dist",
                    reason: format!("must be positive, got {d}"),
                })
            }
            None => map.min_spacing().map_or(f64::INFINITY, |s| 0.5 * s),
        };
        Ok(Self {
            map,
            config,
            max_match_dist,
            last_good: None,
            backlog: Vec::new(),
            assignments: BTreeMap::new(),
            orphans: BTreeSet::new(),
        })
    }

    pub fn map(&self) -> &FieldMap {
        &self.map
    }

    pub fn into_map(self) -> FieldMap {
        self.map
    }

    pub fn max_match_dist(&self) -> f64 {
        self.max_match_dist
    }

    pub fn pending_scans(&self) -> usize {
        self.backlog.len()
    }

    /// Snapshots of the landmarks eligible to write this scan, ordered so the
    /// best-supported landmark writes last.
    pub fn eligible<'a>(&self, landmarks: impl IntoIterator<Item = &'a TreeLandmark>, timestamp: f64) -> Vec<LandmarkSnapshot> {
        let mut out: Vec<LandmarkSnapshot> = landmarks
            .into_iter()
            .filter(|l| l.last_seen == timestamp && l.observation_count >= self.config.min_observations)
            .map(LandmarkSnapshot::of)
            .collect();
        out.sort_by_key(|s| (s.observation_count, s.landmark_id));
        out
    }

    /// Registers one scan. With a degraded pose the scan is queued; with a
    /// good pose any queue is replayed first along poses dead-reckoned from
    /// the last good pose (or back from this one when there is none).
    pub fn process_scan(&mut self, pose: &RobotPose, snapshots: Vec<LandmarkSnapshot>) -> Result<Vec<MatchOutcome>> {
        if pose.degraded {
            self.backlog.push(PendingScan {
                timestamp: pose.timestamp,
                v_x: pose.v_x,
                omega: pose.omega,
                snapshots,
            });
            return Ok(Vec::new());
        }
        let mut outcomes = self.replay(Some(pose))?;
        outcomes.extend(self.apply(pose, &snapshots)?);
        self.last_good = Some(*pose);
        Ok(outcomes)
    }

    /// Replays any queued scans from the last good pose; call at end of run.
    pub fn flush(&mut self) -> Result<Vec<MatchOutcome>> {
        self.replay(None)
    }

    fn replay(&mut self, recovered: Option<&RobotPose>) -> Result<Vec<MatchOutcome>> {
        if self.backlog.is_empty() {
            return Ok(Vec::new());
        }
        let backlog = std::mem::take(&mut self.backlog);
        let poses = match (self.last_good, recovered) {
            (Some(start), _) => {
                let mut pose = start;
                backlog
                    .iter()
                    .map(|s| {
                        pose = pose.integrate(s.v_x, s.omega, s.timestamp - pose.timestamp);
                        pose
                    })
                    .collect::<Vec<_>>()
            }
            (None, Some(end)) => {
                // walk back from the recovered pose, undoing each interval's twist
                let mut pose = *end;
                let (mut v, mut w) = (end.v_x, end.omega);
                let mut rev: Vec<RobotPose> = backlog
                    .iter()
                    .rev()
                    .map(|s| {
                        pose = pose.integrate(-v, -w, pose.timestamp - s.timestamp);
                        pose.timestamp = s.timestamp;
                        (v, w) = (s.v_x, s.omega);
                        pose
                    })
                    .collect();
                rev.reverse();
                rev
            }
            (None, None) => {
                return Err(Error::StalePose {
                    timestamp: backlog[0].timestamp,
                    max_gap: f64::INFINITY,
                })
            }
        };
        let mut outcomes = Vec::new();
        for (scan, mut pose) in backlog.iter().zip(poses) {
            pose.timestamp = scan.timestamp;
            pose.v_x = scan.v_x;
            pose.omega = scan.omega;
            outcomes.extend(self.apply(&pose, &scan.snapshots)?);
        }
        Ok(outcomes)
    }

    fn apply(&mut self, pose: &RobotPose, snapshots: &[LandmarkSnapshot]) -> Result<Vec<MatchOutcome>> {
        let mut outcomes = Vec::with_capacity(snapshots.len());
        for s in snapshots {
            let utm = to_global(&s.body_xy, pose);
            let o = match_and_update(s, &utm, &mut self.map, self.max_match_dist)?;
            if o.assigned {
                self.assignments.insert(s.landmark_id, o.nearest);
                self.orphans.remove(&s.landmark_id);
            } else {
                self.assignments.remove(&s.landmark_id);
                self.orphans.insert(s.landmark_id);
            }
            outcomes.push(o);
        }
        Ok(outcomes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{ClusterMeasurement, FilterModel};
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn grid_map() -> FieldMap {
        let mut records = Vec::new();
        for r in 0..3 {
            for c in 0..2 {
                records.push(GeoTreeRecord::new(
                    (r * 2 + c) as TreeId,
                    6.5 + 5.0 * r as f64,
                    -2.5 + 5.0 * c as f64,
                ));
            }
        }
        FieldMap::new(Datum::default(), records).unwrap()
    }

    fn snapshot(id: LandmarkId, x: f64, y: f64) -> LandmarkSnapshot {
        LandmarkSnapshot {
            landmark_id: id,
            body_xy: Vector2::new(x, y),
            stamp: 1.0,
            width: 2.7,
            height: 2.6,
            ndvi: Some(0.6),
            observation_count: 5,
        }
    }

    #[test]
    fn to_global_examples() {
        let pose = RobotPose::new(0.0, 100.0, 200.0, 0.0);
        assert_eq!(to_global(&Vector2::new(5.0, 0.0), &pose), Vector2::new(105.0, 200.0));
        let pose = RobotPose::new(0.0, 0.0, 0.0, FRAC_PI_2);
        let g = to_global(&Vector2::new(5.0, 0.0), &pose);
        assert!((g - Vector2::new(0.0, 5.0)).norm() < 1e-9);
        let back = pose.world_to_body(&g);
        assert!((back - Vector2::new(5.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn nearest_record_wins() {
        let map = FieldMap::new(
            Datum::default(),
            vec![GeoTreeRecord::new(0, 10.0, 5.0), GeoTreeRecord::new(1, 15.0, 5.0)],
        )
        .unwrap();
        let mut map = map;
        let o = match_and_update(&snapshot(0, 0.0, 0.0), &Vector2::new(10.2, 5.1), &mut map, 2.5).unwrap();
        assert_eq!(o.nearest, 0);
        assert!(o.assigned);
        let r = map.get(0).unwrap();
        assert_eq!((r.est_width, r.est_height, r.match_count), (2.7, 2.6, 1));
        assert_eq!((r.utm_x, r.utm_y), (10.0, 5.0));
        assert_eq!(map.get(1).unwrap().match_count, 0);
    }

    #[test]
    fn midway_goes_to_lower_id() {
        let map = FieldMap::new(
            Datum::default(),
            vec![GeoTreeRecord::new(4, 15.0, 5.0), GeoTreeRecord::new(3, 10.0, 5.0)],
        )
        .unwrap();
        assert_eq!(map.nearest(&Vector2::new(12.5, 5.0)).unwrap().0, 3);
    }

    #[test]
    fn far_landmark_is_orphan() {
        let mut map = grid_map();
        let o = match_and_update(&snapshot(0, 0.0, 0.0), &Vector2::new(40.0, 0.0), &mut map, 2.5).unwrap();
        assert!(!o.assigned);
        assert!(map.records().iter().all(|r| r.match_count == 0));
    }

    #[test]
    fn empty_map_errors() {
        let mut map = FieldMap::new(Datum::default(), vec![]).unwrap();
        assert_eq!(map.nearest(&Vector2::zeros()), Err(Error::EmptyMap));
        assert!(match_and_update(&snapshot(0, 0.0, 0.0), &Vector2::zeros(), &mut map, 1.0).is_err());
        assert!(GeoRegistrar::new(map, GeoConfig::default()).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = vec![GeoTreeRecord::new(1, 0.0, 0.0), GeoTreeRecord::new(1, 5.0, 0.0)];
        assert!(FieldMap::new(Datum::default(), r).is_err());
    }

    #[test]
    fn default_gate_is_half_spacing() {
        let reg = GeoRegistrar::new(grid_map(), GeoConfig::default()).unwrap();
        assert_eq!(reg.max_match_dist(), 2.5);
    }

    #[test]
    fn pose_interpolation() {
        let mut a = RobotPose::new(0.0, 0.0, 0.0, 3.0);
        let mut b = RobotPose::new(1.0, 1.0, 2.0, -3.0);
        b.degraded = true;
        a.v_x = 0.1;
        b.v_x = 0.2;
        let track = PoseTrack::new(vec![a, b]).unwrap();
        let p = track.interpolate(0.25).unwrap();
        assert!((p.x - 0.25).abs() < 1e-12 && (p.y - 0.5).abs() < 1e-12);
        // shortest arc through pi, not through zero
        let arc = normalize_angle(-3.0 - 3.0);
        assert!((p.theta - normalize_angle(3.0 + 0.25 * arc)).abs() < 1e-12);
        assert!(p.degraded);
        assert_eq!(p.v_x, 0.2);
        assert_eq!(track.interpolate(0.0).unwrap(), a);
        assert!(track.interpolate(1.4).is_ok());
        assert!(matches!(track.interpolate(1.6), Err(Error::StalePose { .. })));
        assert!(matches!(track.interpolate(-0.6), Err(Error::StalePose { .. })));
    }

    #[test]
    fn pose_gap_in_the_middle_is_stale() {
        let track = PoseTrack::new(vec![RobotPose::new(0.0, 0.0, 0.0, 0.0), RobotPose::new(2.0, 1.0, 0.0, 0.0)]).unwrap();
        assert!(track.interpolate(1.0).is_err());
        assert!(track.interpolate(0.4).is_ok());
    }

    #[test]
    fn eligibility_and_write_order() {
        let reg = GeoRegistrar::new(grid_map(), GeoConfig::default()).unwrap();
        let m = ClusterMeasurement {
            cluster_id: 0,
            centroid: Vector3::new(5.0, 2.5, 1.0),
            num_pt: 100,
            ndvi_mean: None,
        };
        let mut ls: Vec<TreeLandmark> = (0..4)
            .map(|i| TreeLandmark::from_measurement(i, &m, 2.0, FilterModel::default()))
            .collect();
        ls[0].observation_count = 9;
        ls[1].observation_count = 2;
        ls[2].observation_count = 4;
        ls[3].observation_count = 9;
        ls[3].last_seen = 1.5;
        let ids: Vec<_> = reg.eligible(&ls, 2.0).iter().map(|s| s.landmark_id).collect();
        assert_eq!(ids, vec![2, 0]);
    }

    /// Unicycle poses every 0.5 s along an arc, snapshots of a fixed world
    /// tree seen from each pose.
    fn run(degraded: &[bool], reg: &mut GeoRegistrar) {
        let mut truth = RobotPose::new(0.0, 0.0, -1.0, 0.0);
        let tree = Vector2::new(6.5, 2.5);
        for (k, &bad) in degraded.iter().enumerate() {
            truth = truth.integrate(0.5, 0.04, 0.5);
            let mut logged = truth;
            if bad {
                logged.degraded = true;
                logged.x += 7.0;
            }
            let mut s = snapshot(0, 0.0, 0.0);
            s.body_xy = truth.world_to_body(&tree);
            s.stamp = truth.timestamp;
            s.width = 1.0 + k as f64 * 0.01;
            reg.process_scan(&logged, vec![s]).unwrap();
        }
        reg.flush().unwrap();
    }

    #[test]
    fn degraded_window_backfills_identically() {
        let mut clean = GeoRegistrar::new(grid_map(), GeoConfig::default()).unwrap();
        run(&[false; 20], &mut clean);
        for pattern in [
            (5..12).collect::<Vec<_>>(),
            (0..4).collect(),
            (15..20).collect(),
        ] {
            let flags: Vec<bool> = (0..20).map(|k| pattern.contains(&k)).collect();
            let mut gapped = GeoRegistrar::new(grid_map(), GeoConfig::default()).unwrap();
            run(&flags, &mut gapped);
            assert_eq!(gapped.pending_scans(), 0);
            for (a, b) in clean.map().records().iter().zip(gapped.map().records()) {
                assert_eq!(a.match_count, b.match_count);
                assert!((a.est_width - b.est_width).abs() < 1e-6);
                assert_eq!(a.last_update, b.last_update);
            }
            assert_eq!(clean.assignments, gapped.assignments);
        }
    }

    proptest! {
        #[test]
        fn index_matches_linear_scan(trees in prop::collection::vec(prop::array::uniform2(-50.0f64..50.0), 1..60),
                                     queries in prop::collection::vec(prop::array::uniform2(-80.0f64..80.0), 1..40),
                                     snap in any::<bool>()) {
            // optional coarse grid to create exact ties
            let q = |v: f64| if snap { v.round() } else { v };
            let records = trees.iter().enumerate().map(|(i, t)| GeoTreeRecord::new(i as TreeId, q(t[0]), q(t[1]))).collect();
            let map = FieldMap::new(Datum::default(), records).unwrap();
            for p in queries {
                let p = Vector2::new(q(p[0]), q(p[1]));
                prop_assert_eq!(map.nearest(&p).unwrap(), map.nearest_linear(&p).unwrap());
            }
        }

        #[test]
        fn update_preserves_positions_and_truth(x in -5.0f64..30.0, y in -10.0f64..10.0) {
            let mut map = grid_map();
            let before = map.clone();
            match_and_update(&snapshot(0, 0.0, 0.0), &Vector2::new(x, y), &mut map, 2.5).unwrap();
            for (a, b) in before.records().iter().zip(map.records()) {
                prop_assert_eq!((a.tree_id, a.utm_x, a.utm_y, a.gt_width, a.gt_height), (b.tree_id, b.utm_x, b.utm_y, b.gt_width, b.gt_height));
            }
        }

        #[test]
        fn world_body_round_trip(x in -100.0f64..100.0, y in -100.0f64..100.0, th in -std::f64::consts::PI..std::f64::consts::PI, px in -50.0f64..50.0, py in -50.0f64..50.0) {
            let pose = RobotPose::new(0.0, x, y, th);
            let g = to_global(&Vector2::new(px, py), &pose);
            prop_assert!((pose.world_to_body(&g) - Vector2::new(px, py)).norm() < 1e-9);
        }
    }
}
