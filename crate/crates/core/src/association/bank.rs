use std::collections::BTreeMap;

use super::{
    association_entropy, covariance_is_valid, kalman_update, match_probability,
    normalized_innovation, predict, AssociationConfig, ClusterMeasurement, EgoMotion, FilterModel,
    LandmarkId, TreeLandmark,
};
use crate::error::{Error, Result};

/// Outcome for one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Updated the given landmark.
    Matched(LandmarkId),
    /// No landmark within the candidate radius.
    NoCandidate,
    /// Best probability at or below `th_p`.
    LowProbability,
    /// Candidate probabilities too even to pick one.
    Ambiguous,
    /// All candidate probabilities underflowed to zero.
    Degenerate,
    /// Won the gate but another cluster claimed the same landmark with a higher
    /// probability.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDiagnostics {
    pub cluster_id: usize,
    /// Candidate landmark ids, ascending.
    pub candidates: Vec<LandmarkId>,
    pub probabilities: Vec<f64>,
    pub entropy: Option<f64>,
    pub best: Option<LandmarkId>,
    pub decision: Decision,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationResult {
    /// `(landmark_id, cluster_id)` for every accepted match.
    pub pairs: Vec<(LandmarkId, usize)>,
    /// `(landmark_id, cluster_id)` for every landmark created this scan.
    pub new_landmarks: Vec<(LandmarkId, usize)>,
    pub pruned: Vec<LandmarkId>,
    pub diagnostics: Vec<ClusterDiagnostics>,
}

impl AssociationResult {
    /// Landmark that absorbed `cluster_id`, whether matched or newly created.
    pub fn landmark_for(&self, cluster_id: usize) -> Option<LandmarkId> {
        self.pairs
            .iter()
            .chain(&self.new_landmarks)
            .find(|(_, c)| *c == cluster_id)
            .map(|(l, _)| *l)
    }
}

/// All live landmarks, keyed by id. Ids are assigned in creation order and
/// never reused.
#[derive(Debug, Clone, Default)]
pub struct LandmarkBank {
    pub config: AssociationConfig,
    pub model: FilterModel,
    landmarks: BTreeMap<LandmarkId, TreeLandmark>,
    next_id: LandmarkId,
}

impl LandmarkBank {
    pub fn new(config: AssociationConfig, model: FilterModel) -> Result<Self> {
        if !(config.th_p > 0.0 && config.th_p < 1.0) {
            return Err(Error::InvalidParameter {
                name: "th_p",
                reason: format!("must lie in (0, 1), got {}", config.th_p),
            });
        }
        if !(config.th_h > 0.0 && config.th_h <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "th_h",
                reason: format!("must lie in (0, 1], got {}", config.th_h),
            });
        }
        if !(config.candidate_radius > 0.0) {
            return Err(Error::InvalidParameter {
                name: "candidate_radius",
                reason: format!("must be positive, got {}", config.candidate_radius),
            });
        }
        if config.epsilon.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "floors must be positive".into(),
            });
        }
        Ok(Self {
            config,
            model,
            landmarks: BTreeMap::new(),
            next_id: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn get(&self, id: LandmarkId) -> Option<&TreeLandmark> {
        self.landmarks.get(&id)
    }

    pub fn get_mut(&mut self, id: LandmarkId) -> Option<&mut TreeLandmark> {
        self.landmarks.get_mut(&id)
    }

    /// Landmarks in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &TreeLandmark> {
        self.landmarks.values()
    }

    /// Inserts a landmark built from `m` and returns its id.
    pub fn spawn(&mut self, m: &ClusterMeasurement, timestamp: f64) -> LandmarkId {
        let id = self.next_id;
        self.next_id += 1;
        self.landmarks
            .insert(id, TreeLandmark::from_measurement(id, m, timestamp, self.model));
        id
    }

    /// Fails with [`Error::InvariantViolation`] if any covariance is not
    /// symmetric positive semidefinite.
    pub fn check_invariants(&self) -> Result<()> {
        for l in self.landmarks.values() {
            if !covariance_is_valid(&l.covariance, 1e-9) {
                return Err(Error::InvariantViolation(format!(
                    "landmark {} covariance is not symmetric PSD",
                    l.id
                )));
            }
        }
        Ok(())
    }

    /// One scan of prediction, gating, correspondence, update and pruning.
    ///
    /// Every landmark is first carried into the current body frame with
    /// `motion`. Each cluster is then scored only against landmarks that
    /// existed before this scan and whose predicted horizontal centroid lies
    /// within `candidate_radius`. When two clusters claim the same landmark
    /// the higher probability wins (ties to the lower cluster id) and the
    /// other becomes a new landmark.
    pub fn associate_scan(
        &mut self,
        measurements: &[ClusterMeasurement],
        motion: &EgoMotion,
        timestamp: f64,
    ) -> Result<AssociationResult> {
        for l in self.landmarks.values_mut() {
            predict(l, motion);
            l.state_stamp = timestamp;
        }

        let cfg = self.config;
        let r2 = cfg.candidate_radius * cfg.candidate_radius;
        let mut diagnostics = Vec::with_capacity(measurements.len());
        let mut proposals: BTreeMap<LandmarkId, (usize, f64)> = BTreeMap::new();

        for (idx, m) in measurements.iter().enumerate() {
            let candidates: Vec<&TreeLandmark> = self
                .landmarks
                .values()
                .filter(|l| {
                    let dx = l.state[0] - m.centroid.x;
                    let dy = l.state[1] - m.centroid.y;
                    dx * dx + dy * dy <= r2
                })
                .collect();
            let mut diag = ClusterDiagnostics {
                cluster_id: m.cluster_id,
                candidates: candidates.iter().map(|l| l.id).collect(),
                probabilities: Vec::with_capacity(candidates.len()),
                entropy: None,
                best: None,
                decision: Decision::NoCandidate,
            };
            if candidates.is_empty() {
                diagnostics.push(diag);
                continue;
            }
            for l in &candidates {
                let i = normalized_innovation(m, l, &cfg.epsilon);
                diag.probabilities.push(match_probability(&i, l)?);
            }
            // first maximum wins, i.e. the lowest id among ties
            let (best_k, &p_max) = diag
                .probabilities
                .iter()
                .enumerate()
                .fold((0, &f64::NEG_INFINITY), |acc, (k, p)| if *p > *acc.1 { (k, p) } else { acc });
            diag.best = Some(candidates[best_k].id);
            diag.decision = match association_entropy(&diag.probabilities) {
                Err(Error::DegenerateDistribution) => Decision::Degenerate,
                Err(e) => return Err(e),
                Ok(h) => {
                    diag.entropy = Some(h);
                    if p_max <= cfg.th_p {
                        Decision::LowProbability
                    } else if h >= cfg.th_h {
                        Decision::Ambiguous
                    } else {
                        Decision::Matched(candidates[best_k].id)
                    }
                }
            };
            if let Decision::Matched(id) = diag.decision {
                let entry = proposals.entry(id).or_insert((idx, p_max));
                let (held, held_p) = *entry;
                let held_cluster = measurements[held].cluster_id;
                if p_max > held_p || (p_max == held_p && m.cluster_id < held_cluster) {
                    *entry = (idx, p_max);
                    diagnostics[held].decision = Decision::Duplicate;
                } else if held != idx {
                    diag.decision = Decision::Duplicate;
                }
            }
            diagnostics.push(diag);
        }

        let mut result = AssociationResult::default();
        for (&id, &(idx, _)) in &proposals {
            let l = self.landmarks.get_mut(&id).expect("proposal targets a live landmark");
            kalman_update(l, &measurements[idx], timestamp)?;
            result.pairs.push((id, measurements[idx].cluster_id));
        }
        result.pairs.sort_by_key(|&(_, c)| c);
        for (m, d) in measurements.iter().zip(&diagnostics) {
            if !matches!(d.decision, Decision::Matched(_)) {
                let id = self.spawn(m, timestamp);
                result.new_landmarks.push((id, m.cluster_id));
            }
        }
        result.pruned = self.prune(timestamp);
        result.diagnostics = diagnostics;
        Ok(result)
    }

    /// Drops landmarks unseen for more than `prune_after` seconds that were
    /// observed fewer than `prune_min_observations` times.
    pub fn prune(&mut self, timestamp: f64) -> Vec<LandmarkId> {
        let cfg = self.config;
        let stale: Vec<LandmarkId> = self
            .landmarks
            .values()
            .filter(|l| {
                timestamp - l.last_seen > cfg.prune_after
                    && l.observation_count < cfg.prune_min_observations
            })
            .map(|l| l.id)
            .collect();
        for id in &stale {
            self.landmarks.remove(id);
        }
        stale
    }
}
