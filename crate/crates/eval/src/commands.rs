//! The operations behind each `arbor` subcommand.

use std::collections::BTreeSet;
use std::path::Path;

use arbor_core::fusion::pair_frame;
use arbor_sim::Simulation;

use crate::config::{Mode, PipelineConfig};
use crate::error::Result;
use crate::io::{read_field_map, write_field_map, write_poses, FrameLog, ScanWriter};
use crate::pipeline::{run_pipeline, RunOutput, SurveyData};
use crate::report::{write_run_outputs, RunReport};

/// Simulator with the pipeline's sensor rig.
pub fn simulation(config: &PipelineConfig) -> Result<Simulation> {
    Ok(Simulation::with_rig(config.sim_config(), config.sensor.rig())?)
}

/// What a simulated log directory holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogSummary {
    pub scans: usize,
    pub frames: usize,
    pub trees: usize,
}

/// Renders the configured survey into `dir` as scan, pose, frame and
/// ground-truth logs. Only frames that some scan pairs with are written
/// unless `logs.write_all_frames` is set.
pub fn simulate(config: &PipelineConfig, dir: &Path) -> Result<LogSummary> {
    config.validate()?;
    let sim = simulation(config)?;
    let logs = &config.logs;

    let mut scans = ScanWriter::create(&dir.join(&logs.scans), logs.scan_format)?;
    for k in 0..sim.scan_count() {
        scans.write(&sim.scan(k))?;
    }
    scans.finish()?;
    write_poses(&dir.join(&logs.poses), sim.logged_poses())?;
    write_poses(&dir.join(&logs.true_poses), sim.true_poses())?;
    let truth = sim.ground_truth();
    write_field_map(&dir.join(&logs.ground_truth), &truth)?;

    let frame_times: Vec<f64> = (0..sim.frame_count()).map(|i| sim.frame_time(i)).collect();
    let wanted: BTreeSet<usize> = if logs.write_all_frames {
        (0..frame_times.len()).collect()
    } else {
        (0..sim.scan_count())
            .filter_map(|k| pair_frame(&frame_times, sim.scan_time(k), config.fusion.max_frame_skew))
            .collect()
    };
    let mut frames = FrameLog::create(&dir.join(&logs.frames))?;
    for &i in &wanted {
        frames.push(i, &sim.frame(i))?;
    }
    frames.finish()?;
    Ok(LogSummary {
        scans: sim.scan_count(),
        frames: wanted.len(),
        trees: truth.len(),
    })
}

/// Runs the pipeline on logs in `logs_dir`, or, without one, on the survey
/// `config.mode` selects. Outputs go to `out`.
pub fn run(config: &PipelineConfig, logs_dir: Option<&Path>, out: &Path) -> Result<(RunOutput, RunReport)> {
    config.validate()?;
    let run = match (logs_dir, config.mode) {
        (Some(dir), _) => run_pipeline(config, SurveyData::from_logs(dir, &config.logs)?)?,
        (None, Mode::Replay) => {
            return Err(crate::error::EvalError::Config(
                "replay mode needs a log directory".into(),
            ))
        }
        (None, Mode::Simulate) => {
            let sim = simulation(config)?;
            run_pipeline(config, SurveyData::from_simulation(&sim))?
        }
    };
    let report = write_run_outputs(out, &run)?;
    Ok((run, report))
}

/// Scores a field map written by a previous run.
pub fn evaluate(field_map: &Path) -> Result<RunReport> {
    RunReport::from_map(&read_field_map(field_map)?)
}
