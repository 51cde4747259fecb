//! Survey paths built from straight and constant-rate arc primitives, sampled
//! at the scan rate by exact unicycle integration.
//!
//! Every primitive is stretched to a whole number of scan periods, so the
//! twist is constant within each scan interval and a pose's `(v_x, omega)` is
//! exactly the motion since the previous pose.

use std::f64::consts::{FRAC_PI_2, PI};

use arbor_core::RobotPose;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::orchard::OrchardSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Straight,
    SType,
    NType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    pub kind: PathKind,
    pub v_x: f64,
    pub omega: f64,
    /// Length of each pass along the rows, meters.
    pub goal: f64,
    pub scan_rate: f64,
    pub frame_rate: f64,
    /// Clearance radius of the robot body.
    pub robot_radius: f64,
    /// Upper bound of a seeded random shift of the start along the first
    /// pass, meters.
    pub phase_jitter: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: PathKind::Straight,
            v_x: 0.5,
            omega: 1.0,
            goal: 23.0,
            scan_rate: 10.0,
            frame_rate: 30.0,
            robot_radius: 0.3,
            phase_jitter: 0.0,
        }
    }
}

impl TrajectorySpec {
    pub fn scan_period(&self) -> f64 {
        1.0 / self.scan_rate
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_x", self.v_x),
            ("omega", self.omega),
            ("goal", self.goal),
            ("scan_rate", self.scan_rate),
            ("frame_rate", self.frame_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.robot_radius >= 0.0 && self.phase_jitter >= 0.0) {
            return Err(SimError::InvalidSpec("robot_radius and phase_jitter must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Straight(f64),
    /// Signed heading change, positive to the left.
    Arc(f64),
}

/// One constant-twist stretch lasting `steps` scan periods.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    v: f64,
    omega: f64,
    steps: usize,
}

fn quantize(p: Primitive, spec: &TrajectorySpec) -> Option<Segment> {
    let dt = spec.scan_period();
    match p {
        Primitive::Straight(len) if len > 1e-12 => {
            let steps = ((len / spec.v_x) / dt - 1e-9).ceil().max(1.0) as usize;
            Some(Segment {
                v: len / (steps as f64 * dt),
                omega: 0.0,
                steps,
            })
        }
        Primitive::Arc(angle) if angle.abs() > 1e-12 => {
            let steps = ((angle.abs() / spec.omega) / dt).round().max(1.0) as usize;
            Some(Segment {
                v: spec.v_x,
                omega: angle / (steps as f64 * dt),
                steps,
            })
        }
        _ => None,
    }
}

/// Turning radius of a quantized arc of `angle`.
fn arc_radius(angle: f64, spec: &TrajectorySpec) -> f64 {
    quantize(Primitive::Arc(angle), spec).map_or(0.0, |s| s.v / s.omega.abs())
}

/// Samples `primitives` from `start` every scan period.
pub fn integrate_primitives(start: RobotPose, primitives: &[Primitive], spec: &TrajectorySpec) -> Vec<RobotPose> {
    let dt = spec.scan_period();
    let mut poses = vec![RobotPose { v_x: 0.0, omega: 0.0, ..start }];
    let mut pose = poses[0];
    let mut k = 0usize;
    for seg in primitives.iter().filter_map(|p| quantize(*p, spec)) {
        for _ in 0..seg.steps {
            k += 1;
            pose = pose.integrate(seg.v, seg.omega, dt);
            // timestamps from the step index, so they never accumulate error
            pose.timestamp = start.timestamp + k as f64 * dt;
            poses.push(pose);
        }
    }
    poses
}

fn end_of(start: RobotPose, primitives: &[Primitive], spec: &TrajectorySpec) -> RobotPose {
    *integrate_primitives(start, primitives, spec).last().expect("start pose is always present")
}

/// Lane centre lines between and beside the tree columns.
fn lanes(orchard: &OrchardSpec) -> Vec<f64> {
    (0..=orchard.cols)
        .map(|j| orchard.origin_y + (j as f64 - 0.5) * orchard.spacing_y)
        .collect()
}

/// Start of the first pass; `goal` meters of travel then pass the whole grid.
fn lane_start_x(orchard: &OrchardSpec) -> f64 {
    orchard.origin_x - 6.5
}

/// Primitives of the path and its start pose in the orchard frame.
pub fn plan(spec: &TrajectorySpec, orchard: &OrchardSpec, seed: u64) -> Result<(RobotPose, Vec<Primitive>)> {
    spec.validate()?;
    let jitter = if spec.phase_jitter > 0.0 {
        ChaCha8Rng::seed_from_u64(seed ^ 0x7A5E_0000).random_range(0.0..spec.phase_jitter)
    } else {
        0.0
    };
    let lanes = lanes(orchard);
    let x0 = lane_start_x(orchard) + jitter;
    let x_end = lane_start_x(orchard) + spec.goal;
    match spec.kind {
        PathKind::Straight => {
            let y = orchard.center().y;
            Ok((RobotPose::new(0.0, x0, y, 0.0), vec![Primitive::Straight(x_end - x0)]))
        }
        PathKind::SType => {
            if lanes.len() < 2 {
                return Err(SimError::InvalidSpec("S-type path needs at least one tree column".into()));
            }
            let r = arc_radius(FRAC_PI_2, spec);
            let mut prims = vec![Primitive::Straight(x_end - x0)];
            for j in 1..lanes.len() {
                let gap = lanes[j] - lanes[j - 1];
                if gap < 2.0 * r {
                    return Err(SimError::Infeasible(format!(
                        "lane gap {gap:.2} m is tighter than the {:.2} m turn diameter",
                        2.0 * r
                    )));
                }
                // turn left at the far end of even passes, right at the near end
                let side = if j % 2 == 1 { 1.0 } else { -1.0 };
                prims.push(Primitive::Arc(side * FRAC_PI_2));
                prims.push(Primitive::Straight(gap - 2.0 * r));
                prims.push(Primitive::Arc(side * FRAC_PI_2));
                prims.push(Primitive::Straight(x_end - lane_start_x(orchard)));
            }
            Ok((RobotPose::new(0.0, x0, lanes[0], 0.0), prims))
        }
        PathKind::NType => {
            let (y_lo, y_hi) = (lanes[0], *lanes.last().expect("at least one lane"));
            let c = orchard.center();
            let turn = 0.75 * PI;
            let start = RobotPose::new(0.0, x0, y_lo, 0.0);
            // first pass length so the diagonal runs along x + y = cx + cy
            let probe = end_of(start, &[Primitive::Arc(turn)], spec);
            let first = (c.x + c.y) - (probe.x + probe.y);
            // diagonal length so the final turn lands on the far lane
            let head = [Primitive::Straight(first), Primitive::Arc(turn)];
            let a = end_of(start, &head, spec);
            let b = end_of(a, &[Primitive::Arc(-turn)], spec);
            let diagonal = (y_hi - b.y) / (0.75 * PI).sin();
            if first < 0.0 || diagonal < 0.0 {
                return Err(SimError::Infeasible("orchard too small for an N-type path".into()));
            }
            let mut prims = vec![
                Primitive::Straight(first),
                Primitive::Arc(turn),
                Primitive::Straight(diagonal),
                Primitive::Arc(-turn),
            ];
            let d = end_of(start, &prims, spec);
            prims.push(Primitive::Straight((x_end - d.x).max(0.0)));
            Ok((start, prims))
        }
    }
}

/// True trajectory at scan granularity, checked for clearance from every
/// trunk and crown.
pub fn generate_trajectory(spec: &TrajectorySpec, orchard: &OrchardSpec, seed: u64) -> Result<Vec<RobotPose>> {
    orchard.validate()?;
    let (start, prims) = plan(spec, orchard, seed)?;
    let poses = integrate_primitives(start, &prims, spec);
    for tree in orchard.placed() {
        for p in &poses {
            let d = (p.x - tree.x).hypot(p.y - tree.y);
            if d < tree.shape.crown_radius_max + spec.robot_radius {
                return Err(SimError::Infeasible(format!(
                    "path passes {:.2} m from tree {} at t = {:.1} s",
                    d, tree.tree_id, p.timestamp
                )));
            }
        }
    }
    Ok(poses)
}

/// Pose at any time between scan samples, integrated from the preceding
/// sample with the twist of the following one.
pub fn pose_at(poses: &[RobotPose], t: f64) -> RobotPose {
    let i = poses.partition_point(|p| p.timestamp <= t);
    if i == 0 {
        return poses[0];
    }
    if i == poses.len() {
        return poses[i - 1];
    }
    let (a, b) = (&poses[i - 1], &poses[i]);
    let mut p = a.integrate(b.v_x, b.omega, t - a.timestamp);
    p.timestamp = t;
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_goal() {
        let spec = TrajectorySpec::default();
        let poses = generate_trajectory(&spec, &OrchardSpec::default(), 0).unwrap();
        let end = poses.last().unwrap();
        assert_eq!(poses.len(), 461);
        assert!((end.timestamp - 46.0).abs() < 1e-9);
        assert!((end.x - poses[0].x - 23.0).abs() < 1e-6);
        assert!(end.y.abs() < 1e-12);
    }

    #[test]
    fn twist_explains_each_step() {
        for kind in [PathKind::Straight, PathKind::SType, PathKind::NType] {
            let spec = TrajectorySpec { kind, ..Default::default() };
            let poses = generate_trajectory(&spec, &OrchardSpec::default(), 0).unwrap();
            for w in poses.windows(2) {
                let p = w[0].integrate(w[1].v_x, w[1].omega, 0.1);
                assert!((p.x - w[1].x).abs() < 1e-9 && (p.y - w[1].y).abs() < 1e-9, "{kind:?}");
            }
        }
    }

    #[test]
    fn s_type_turns_back_twice() {
        let spec = TrajectorySpec {
            kind: PathKind::SType,
            ..Default::default()
        };
        let poses = generate_trajectory(&spec, &OrchardSpec::default(), 0).unwrap();
        let crossings = poses
            .windows(2)
            .filter(|w| {
                let s = |th: f64| th.abs() < FRAC_PI_2;
                s(w[0].theta) != s(w[1].theta)
            })
            .count();
        assert!(crossings >= 2, "crossings {crossings}");
        let end = poses.last().unwrap();
        assert!((end.y - 5.0).abs() < 1e-6);
        assert!(end.theta.abs() < 1e-9);
    }

    #[test]
    fn n_type_ends_on_far_lane() {
        let spec = TrajectorySpec {
            kind: PathKind::NType,
            ..Default::default()
        };
        let poses = generate_trajectory(&spec, &OrchardSpec::default(), 0).unwrap();
        let end = poses.last().unwrap();
        assert!((end.y - 5.0).abs() < 1e-6);
        assert!(end.theta.abs() < 1e-9);
        assert!(end.x >= 22.9);
        let diag: Vec<_> = poses.iter().filter(|p| (p.theta - 0.75 * PI).abs() < 1e-9).collect();
        assert!(!diag.is_empty());
        for p in diag {
            assert!((p.x + p.y - 11.5).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_same_poses() {
        let spec = TrajectorySpec {
            kind: PathKind::SType,
            phase_jitter: 0.5,
            ..Default::default()
        };
        let a = generate_trajectory(&spec, &OrchardSpec::default(), 9).unwrap();
        let b = generate_trajectory(&spec, &OrchardSpec::default(), 9).unwrap();
        assert_eq!(a, b);
        let c = generate_trajectory(&spec, &OrchardSpec::default(), 10).unwrap();
        assert_ne!(a[0].x, c[0].x);
    }

    #[test]
    fn tight_rows_are_infeasible() {
        let o = OrchardSpec {
            spacing_y: 3.0,
            ..OrchardSpec::default()
        };
        let spec = TrajectorySpec::default();
        assert!(matches!(generate_trajectory(&spec, &o, 0), Err(SimError::Infeasible(_))));
    }

    #[test]
    fn pose_between_samples() {
        let spec = TrajectorySpec {
            kind: PathKind::SType,
            ..Default::default()
        };
        let poses = generate_trajectory(&spec, &OrchardSpec::default(), 0).unwrap();
        let p = pose_at(&poses, 47.05);
        let q = pose_at(&poses, 47.1);
        assert_eq!(q, poses[471]);
        let back = p.integrate(poses[471].v_x, poses[471].omega, 0.05);
        assert!((back.x - q.x).abs() < 1e-9);
    }
}
