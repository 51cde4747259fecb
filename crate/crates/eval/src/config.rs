//! Pipeline configuration: every tunable with a default, stored as TOML.

use std::path::{Path, PathBuf};

use arbor_core::association::{AssociationConfig, FilterModel};
use arbor_core::georef::GeoConfig;
use arbor_core::morphology::LidarVerticalModel;
use arbor_core::preprocess::ClusterParams;
use arbor_core::{CameraModel, SensorRig};
use arbor_sim::{LidarSpec, NoiseSpec, OrchardSpec, SimConfig, TrajectorySpec};
use nalgebra::{Matrix5, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Render the survey in memory from `[sim]`.
    #[default]
    Simulate,
    /// Read scan, frame and pose logs from disk.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScanFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Vegetation is `ndvi_lo < v <= ndvi_hi`.
    pub ndvi_lo: f64,
    pub ndvi_hi: f64,
    /// Oldest frame, relative to a scan, still used to colorize it.
    pub max_frame_skew: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            ndvi_lo: -0.3,
            ndvi_hi: 1.0,
            max_frame_skew: 0.2,
        }
    }
}

/// Diagonal process and measurement noise of every landmark filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub process_noise: f64,
    pub measurement_noise: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            process_noise: 1.0,
            measurement_noise: 0.1,
        }
    }
}

impl FilterConfig {
    pub fn model(&self) -> FilterModel {
        FilterModel {
            q: Matrix5::identity() * self.process_noise,
            r: Matrix5::identity() * self.measurement_noise,
            ..FilterModel::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraitConfig {
    pub n_slices: usize,
}

impl Default for TraitConfig {
    fn default() -> Self {
        Self { n_slices: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Ring layout and LiDAR height above the ground contact plane.
    pub lidar: LidarVerticalModel,
    /// Camera position in the LiDAR frame.
    pub camera_offset: [f64; 3],
    pub camera: CameraModel,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            lidar: LidarVerticalModel::default(),
            camera_offset: [0.1, 0.0, -0.15],
            camera: CameraModel::default(),
        }
    }
}

impl SensorConfig {
    pub fn rig(&self) -> SensorRig {
        SensorRig::forward_camera(
            self.lidar.sensor_height,
            Vector3::from(self.camera_offset),
            self.camera,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub orchard: OrchardSpec,
    pub trajectory: TrajectorySpec,
    pub noise: NoiseSpec,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let lidar = LidarSpec::default();
        Self {
            orchard: OrchardSpec::default(),
            trajectory: TrajectorySpec::default(),
            noise: NoiseSpec::default(),
            azimuth_step_deg: lidar.azimuth_step_deg,
            max_range: lidar.max_range,
        }
    }
}

/// File names inside a log directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogConfig {
    pub scans: PathBuf,
    pub scan_format: ScanFormat,
    pub poses: PathBuf,
    pub frames: PathBuf,
    pub ground_truth: PathBuf,
    /// True poses of a simulated survey; optional on replay, used only to
    /// score association.
    pub true_poses: PathBuf,
    /// Write every camera frame, not only those paired with a scan.
    pub write_all_frames: bool,
}

impl Default for LogConfig {
    fn default() -> Self {
        Self {
            scans: "scans.csv".into(),
            scan_format: ScanFormat::Csv,
            poses: "poses.csv".into(),
            frames: "frames/index.csv".into(),
            ground_truth: "ground_truth.csv".into(),
            true_poses: "true_poses.csv".into(),
            write_all_frames: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Largest distance in time between a scan and its nearest pose sample.
    pub max_pose_gap: f64,
    pub fusion: FusionConfig,
    pub preprocess: ClusterParams,
    pub association: AssociationConfig,
    pub filter: FilterConfig,
    pub traits: TraitConfig,
    pub sensor: SensorConfig,
    pub georef: GeoConfig,
    pub sim: SimSection,
    pub logs: LogConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Simulate,
            seed: 0,
            max_pose_gap: 0.5,
            fusion: FusionConfig::default(),
            preprocess: ClusterParams::default(),
            association: AssociationConfig::default(),
            filter: FilterConfig::default(),
            traits: TraitConfig::default(),
            sensor: SensorConfig::default(),
            georef: GeoConfig::default(),
            sim: SimSection::default(),
            logs: LogConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| EvalError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies `key.path=value` overrides. Values are parsed as TOML and fall
    /// back to plain strings. Keys that do not name a configuration field are
    /// rejected.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Table::try_from(self).map_err(|e| EvalError::Config(e.to_string()))?;
        let mut keys = Vec::new();
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| EvalError::Config(format!("override `{item}` is not key=value")))?;
            let (key, raw) = (key.trim(), raw.trim());
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            set_path(&mut root, key, value)?;
            keys.push(key.to_string());
        }
        let config: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| EvalError::Config(e.to_string()))?;
        // a key that deserialization ignored does not survive a round trip
        let check = toml::Table::try_from(&config).map_err(|e| EvalError::Config(e.to_string()))?;
        for key in keys {
            if lookup(&check, &key).is_none() {
                return Err(EvalError::Config(format!("unknown configuration key `{key}`")));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        arbor_core::fusion::NdviThreshold::new(self.fusion.ndvi_lo, self.fusion.ndvi_hi)?;
        self.preprocess.validate()?;
        self.sensor.lidar.validate()?;
        self.sensor.camera.validate()?;
        if self.traits.n_slices == 0 {
            return Err(EvalError::Config("traits.n_slices must be positive".into()));
        }
        if !(self.max_pose_gap > 0.0) || !(self.fusion.max_frame_skew >= 0.0) {
            return Err(EvalError::Config("max_pose_gap and max_frame_skew must be positive".into()));
        }
        if !(self.filter.process_noise >= 0.0 && self.filter.measurement_noise > 0.0) {
            return Err(EvalError::Config("filter noise must be non-negative, measurement noise positive".into()));
        }
        if self.seed > i64::MAX as u64 {
            return Err(EvalError::Config("seed must fit in a signed 64-bit integer".into()));
        }
        Ok(())
    }

    /// Simulator settings with the pipeline's sensor geometry and seed.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            orchard: self.sim.orchard.clone(),
            trajectory: self.sim.trajectory.clone(),
            noise: self.sim.noise.clone(),
            lidar: LidarSpec {
                vertical: self.sensor.lidar.clone(),
                azimuth_step_deg: self.sim.azimuth_step_deg,
                max_range: self.sim.max_range,
            },
            seed: self.seed,
        }
    }
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| EvalError::Config(format!("empty key in `{key}`")))?;
    let mut table = root;
    for part in parts {
        table = table
            .get_mut(part)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| EvalError::Config(format!("unknown configuration key `{key}`")))?;
    }
    table.insert(leaf.to_string(), value);
    Ok(())
}

fn lookup<'a>(root: &'a toml::Table, key: &str) -> Option<&'a toml::Value> {
    let mut parts = key.split('.');
    let mut value = root.get(parts.next()?)?;
    for part in parts {
        value = value.as_table()?.get(part)?;
    }
    Some(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = PipelineConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let c = PipelineConfig::default()
            .with_overrides(&[
                "association.th_p=0.6",
                "sim.trajectory.kind=s_type",
                "seed=7",
                "mode=replay",
                "georef.max_match_dist=2.0",
                "sim.noise.gnss_outages=[[10.0, 20.0]]",
            ])
            .unwrap();
        assert_eq!(c.association.th_p, 0.6);
        assert_eq!(c.sim.trajectory.kind, arbor_sim::PathKind::SType);
        assert_eq!(c.seed, 7);
        assert_eq!(c.mode, Mode::Replay);
        assert_eq!(c.georef.max_match_dist, Some(2.0));
        assert_eq!(c.sim.noise.gnss_outages, vec![[10.0, 20.0]]);
        let text = c.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let c = PipelineConfig::default();
        assert!(c.with_overrides(&["association.th_q=0.6"]).is_err());
        assert!(c.with_overrides(&["nosuch.th_p=0.6"]).is_err());
        assert!(c.with_overrides(&["seed"]).is_err());
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let c = PipelineConfig::default();
        assert!(c.with_overrides(&["fusion.ndvi_lo=1.0"]).is_err());
        assert!(c.with_overrides(&["traits.n_slices=0"]).is_err());
    }
}
