//! The per-scan survey loop: fusion, clustering, association, traits and
//! georeferencing, with per-scan latency and association scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use arbor_core::association::{ClusterMeasurement, EgoMotion, LandmarkBank, LandmarkId, TreeLandmark};
use arbor_core::fusion::{colorize_cloud, compute_ndvi, pair_frame, threshold_mask, NdviFrame, RgnFrame};
use arbor_core::georef::{to_global, FieldMap, GeoRegistrar, PoseTrack, TreeId};
use arbor_core::morphology::{estimate_height, estimate_width};
use arbor_core::preprocess::compute_clusters;
use arbor_core::{RingedPointCloud, RobotPose};
use arbor_sim::Simulation;
use serde::Serialize;

use crate::config::{LogConfig, PipelineConfig};
use crate::error::{EvalError, Result};
use crate::io::{read_field_map, read_poses, FrameLog, ScanReader};

type ScanStream<'a> = Box<dyn Iterator<Item = Result<RingedPointCloud>> + 'a>;
type FrameLoader<'a> = Box<dyn FnMut(usize) -> Result<RgnFrame> + 'a>;

/// Everything one survey run consumes, whether rendered or read from logs.
pub struct SurveyData<'a> {
    pub scans: ScanStream<'a>,
    /// Sorted frame timestamps; `frames(i)` loads frame `i`.
    pub frame_times: Vec<f64>,
    pub frames: FrameLoader<'a>,
    /// Poses as logged, in UTM.
    pub poses: Vec<RobotPose>,
    pub ground_truth: FieldMap,
    /// True poses, used only to score association.
    pub true_poses: Option<Vec<RobotPose>>,
}

impl<'a> SurveyData<'a> {
    /// Renders scans and frames on demand.
    pub fn from_simulation(sim: &'a Simulation) -> Self {
        Self {
            scans: Box::new((0..sim.scan_count()).map(|k| Ok(sim.scan(k)))),
            frame_times: (0..sim.frame_count()).map(|i| sim.frame_time(i)).collect(),
            frames: Box::new(|i| Ok(sim.frame(i))),
            poses: sim.logged_poses().to_vec(),
            ground_truth: sim.ground_truth(),
            true_poses: Some(sim.true_poses().to_vec()),
        }
    }
}

impl SurveyData<'static> {
    /// Streams scans from a log directory. Frame and true-pose logs are
    /// optional; the pose log and the ground-truth map are required.
    pub fn from_logs(dir: &Path, logs: &LogConfig) -> Result<Self> {
        let scans = ScanReader::open(&dir.join(&logs.scans), logs.scan_format)?;
        let poses = read_poses(&dir.join(&logs.poses))?;
        let ground_truth = read_field_map(&dir.join(&logs.ground_truth))?;
        let frame_index = dir.join(&logs.frames);
        let frame_log = if frame_index.exists() {
            Some(FrameLog::open(&frame_index)?)
        } else {
            log::warn!("{}: no frame log, scans will not be colorized", frame_index.display());
            None
        };
        let true_path = dir.join(&logs.true_poses);
        let true_poses = true_path.exists().then(|| read_poses(&true_path)).transpose()?;
        let frame_times = frame_log.as_ref().map(FrameLog::timestamps).unwrap_or_default();
        Ok(Self {
            scans: Box::new(scans),
            frame_times,
            frames: Box::new(move |i| match &frame_log {
                Some(log) => log.load(i),
                None => Err(EvalError::Input("no frame log".into())),
            }),
            poses,
            ground_truth,
            true_poses,
        })
    }
}

/// Processing record of one scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanTiming {
    pub scan: usize,
    pub timestamp: f64,
    pub clusters: usize,
    pub landmarks: usize,
    /// Wall time of fusion through georeferencing, excluding log reading and
    /// rendering.
    pub latency_ms: f64,
}

/// How confirmed landmarks ended up in the field map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssociationSummary {
    /// Landmarks with at least the registration quorum of observations.
    pub confirmed_landmarks: usize,
    /// Landmarks whose latest match landed on a tree.
    pub assigned: usize,
    /// Assigned landmarks whose tree is also the nearest one under the true
    /// pose; unknown without true poses.
    pub correct: Option<usize>,
    /// Landmarks whose latest match fell outside the gate.
    pub orphans: usize,
    /// Trees claimed by more than one landmark.
    pub duplicate_trees: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub field_map: FieldMap,
    pub landmarks: Vec<TreeLandmark>,
    pub timings: Vec<ScanTiming>,
    pub summary: AssociationSummary,
}

impl RunOutput {
    pub fn scans(&self) -> usize {
        self.timings.len()
    }

    pub fn mean_latency_ms(&self) -> Option<f64> {
        (!self.timings.is_empty())
            .then(|| self.timings.iter().map(|t| t.latency_ms).sum::<f64>() / self.timings.len() as f64)
    }
}

/// Runs the survey loop over every scan. A broken filter invariant aborts the
/// run with [`arbor_core::Error::InvariantViolation`].
pub fn run_pipeline(config: &PipelineConfig, data: SurveyData<'_>) -> Result<RunOutput> {
    config.validate()?;
    let SurveyData {
        scans,
        frame_times,
        mut frames,
        poses,
        ground_truth,
        true_poses,
    } = data;
    let rig = config.sensor.rig();
    let mut bank = LandmarkBank::new(config.association, config.filter.model())?;
    let mut track = PoseTrack::new(poses)?;
    track.max_gap = config.max_pose_gap;
    let true_track = true_poses
        .map(|p| {
            PoseTrack::new(p).map(|mut t| {
                t.max_gap = config.max_pose_gap;
                t
            })
        })
        .transpose()?;
    let mut registrar = GeoRegistrar::new(ground_truth, config.georef)?;

    let mut ndvi_cache: Option<(usize, NdviFrame)> = None;
    let mut prev_t: Option<f64> = None;
    let mut timings = Vec::new();
    let mut truth_nearest: BTreeMap<LandmarkId, TreeId> = BTreeMap::new();

    for (k, scan) in scans.enumerate() {
        let scan = scan?;
        let t = scan.timestamp;
        let pose = track.interpolate(t)?;
        let frame_idx = pair_frame(&frame_times, t, config.fusion.max_frame_skew);
        let raw = match frame_idx {
            Some(i) if ndvi_cache.as_ref().is_none_or(|(c, _)| *c != i) => Some((i, frames(i)?)),
            _ => None,
        };

        let start = Instant::now();
        if let Some((i, frame)) = raw {
            frame.validate()?;
            let ndvi = threshold_mask(&compute_ndvi(&frame), config.fusion.ndvi_lo, config.fusion.ndvi_hi)?;
            ndvi_cache = Some((i, ndvi));
        }
        let colored = match (frame_idx, &ndvi_cache) {
            (Some(i), Some((c, ndvi))) if i == *c => colorize_cloud(&scan, ndvi, &rig.camera, &rig.cam_from_lidar),
            _ => scan,
        };
        let clusters = compute_clusters(&colored, &config.preprocess, config.seed)?;
        let measurements: Vec<ClusterMeasurement> = clusters
            .iter()
            .map(|c| ClusterMeasurement::from_cluster(c, &rig.base_from_lidar))
            .collect();
        let motion = EgoMotion::new(pose.v_x, pose.omega, prev_t.map_or(0.0, |p| t - p));
        let result = bank.associate_scan(&measurements, &motion, t)?;
        for &(id, cid) in result.pairs.iter().chain(&result.new_landmarks) {
            let cluster = &clusters[cid];
            debug_assert_eq!(cluster.cluster_id, cid);
            let landmark = bank.get_mut(id).expect("associated landmark exists");
            estimate_height(cluster, landmark, &config.sensor.lidar);
            estimate_width(cluster, landmark, config.traits.n_slices);
        }
        bank.check_invariants()?;
        let snapshots = registrar.eligible(bank.iter(), t);
        let scored = true_track.is_some().then(|| snapshots.clone());
        registrar.process_scan(&pose, snapshots)?;
        let latency = start.elapsed();

        if let (Some(truth), Some(snapshots)) = (&true_track, scored) {
            let true_pose = truth.interpolate(t)?;
            for s in snapshots {
                let (tree, _) = registrar.map().nearest(&to_global(&s.body_xy, &true_pose))?;
                truth_nearest.insert(s.landmark_id, tree);
            }
        }
        timings.push(ScanTiming {
            scan: k,
            timestamp: t,
            clusters: clusters.len(),
            landmarks: bank.len(),
            latency_ms: ms(latency),
        });
        prev_t = Some(t);
    }
    registrar.flush()?;

    let summary = summarize(&bank, &registrar, true_track.is_some().then_some(&truth_nearest));
    if timings.is_empty() {
        log::warn!("the scan log is empty; the report has no rows");
    }
    Ok(RunOutput {
        landmarks: bank.iter().cloned().collect(),
        field_map: registrar.into_map(),
        timings,
        summary,
    })
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn summarize(
    bank: &LandmarkBank,
    registrar: &GeoRegistrar,
    truth_nearest: Option<&BTreeMap<LandmarkId, TreeId>>,
) -> AssociationSummary {
    let quorum = registrar.config.min_observations;
    let confirmed: BTreeSet<LandmarkId> = bank
        .iter()
        .filter(|l| l.observation_count >= quorum)
        .map(|l| l.id)
        .collect();
    let assigned: Vec<(LandmarkId, TreeId)> = registrar
        .assignments
        .iter()
        .filter(|(l, _)| confirmed.contains(l) && !registrar.orphans.contains(l))
        .map(|(&l, &t)| (l, t))
        .collect();
    let mut per_tree: BTreeMap<TreeId, usize> = BTreeMap::new();
    for &(_, tree) in &assigned {
        *per_tree.entry(tree).or_default() += 1;
    }
    AssociationSummary {
        confirmed_landmarks: confirmed.len(),
        assigned: assigned.len(),
        correct: truth_nearest.map(|truth| {
            assigned
                .iter()
                .filter(|(l, tree)| truth.get(l) == Some(tree))
                .count()
        }),
        orphans: registrar.orphans.iter().filter(|l| confirmed.contains(l)).count(),
        duplicate_trees: per_tree.values().filter(|&&n| n > 1).count(),
    }
}
