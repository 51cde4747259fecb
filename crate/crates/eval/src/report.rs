//! Per-tree reports, row-group tables and run output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use arbor_core::georef::{FieldMap, TreeId};
use serde::Serialize;

use crate::error::{EvalError, Result};
use crate::io::write_field_map;
use crate::metrics::{compute_mape, mean_std};
use crate::pipeline::{AssociationSummary, RunOutput};

/// Trees sharing a UTM easting (within this distance) form one row group.
pub const ROW_TOLERANCE: f64 = 1e-6;

/// Names row groups by ascending easting: `front`, `middle`, `back` for three
/// rows, `row_1`, `row_2`, ... otherwise.
pub fn row_groups(map: &FieldMap) -> BTreeMap<TreeId, String> {
    let mut eastings: Vec<f64> = map.records().iter().map(|r| r.utm_x).collect();
    eastings.sort_by(f64::total_cmp);
    let mut rows: Vec<f64> = Vec::new();
    for x in eastings {
        if rows.last().is_none_or(|&r| x - r > ROW_TOLERANCE) {
            rows.push(x);
        }
    }
    let name = |k: usize| match (rows.len(), k) {
        (3, 0) => "front".to_string(),
        (3, 1) => "middle".to_string(),
        (3, 2) => "back".to_string(),
        _ => format!("row_{}", k + 1),
    };
    map.records()
        .iter()
        .map(|r| {
            let k = rows.partition_point(|&x| r.utm_x - x > ROW_TOLERANCE);
            (r.tree_id, name(k))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeRow {
    pub tree_id: TreeId,
    pub row_group: String,
    pub gt_width: Option<f64>,
    pub est_width: f64,
    pub gt_height: Option<f64>,
    pub est_height: f64,
    pub ndvi_mean: Option<f64>,
    pub n_observations: u32,
}

/// Per-tree estimates against ground truth, with summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<TreeRow>,
    pub width_mape: Option<f64>,
    pub height_mape: Option<f64>,
    pub scans: Option<usize>,
    /// Mean per-scan latency, seconds. Kept out of the report files so equal
    /// runs write equal bytes; per-scan values go to the timing file.
    pub mean_latency_s: Option<f64>,
    pub association: Option<AssociationSummary>,
}

impl RunReport {
    /// Scores every tree that carries ground truth; a tree never matched
    /// keeps its zero estimate and counts as a full miss.
    pub fn from_map(map: &FieldMap) -> Result<Self> {
        let groups = row_groups(map);
        let rows: Vec<TreeRow> = map
            .records()
            .iter()
            .map(|r| TreeRow {
                tree_id: r.tree_id,
                row_group: groups[&r.tree_id].clone(),
                gt_width: r.gt_width,
                est_width: r.est_width,
                gt_height: r.gt_height,
                est_height: r.est_height,
                ndvi_mean: r.est_ndvi_mean,
                n_observations: r.match_count,
            })
            .collect();
        let pairs = |f: fn(&TreeRow) -> (f64, Option<f64>)| -> Vec<(f64, f64)> {
            rows.iter().filter_map(|r| {
                let (e, g) = f(r);
                g.map(|g| (e, g))
            })
            .collect()
        };
        let width = pairs(|r| (r.est_width, r.gt_width));
        let height = pairs(|r| (r.est_height, r.gt_height));
        Ok(Self {
            width_mape: (!width.is_empty()).then(|| compute_mape(&width)).transpose()?,
            height_mape: (!height.is_empty()).then(|| compute_mape(&height)).transpose()?,
            rows,
            scans: None,
            mean_latency_s: None,
            association: None,
        })
    }

    /// Report of a pipeline run. A run without scans has no rows.
    pub fn from_run(run: &RunOutput) -> Result<Self> {
        let mut report = if run.scans() == 0 {
            Self {
                rows: Vec::new(),
                width_mape: None,
                height_mape: None,
                scans: None,
                mean_latency_s: None,
                association: None,
            }
        } else {
            Self::from_map(&run.field_map)?
        };
        report.scans = Some(run.scans());
        report.mean_latency_s = run.mean_latency_ms().map(|ms| ms / 1e3);
        report.association = Some(run.summary);
        Ok(report)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(create(path)?);
        w.write_record([
            "tree_id",
            "row_group",
            "gt_width",
            "est_width",
            "gt_height",
            "est_height",
            "ndvi_mean",
            "n_observations",
        ])
        .map_err(|e| EvalError::format(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| EvalError::format(path, e))?;
        }
        w.flush().map_err(|e| EvalError::io(path, e))
    }

    /// Human-readable summary: row-group mean and standard deviation, MAPE
    /// and association counts. Contains nothing run-time dependent, so equal
    /// runs give equal text.
    pub fn to_text(&self) -> String {
        let mut s = String::from("arbor survey report\n");
        if let Some(n) = self.scans {
            let _ = writeln!(s, "scans: {n}");
        }
        let _ = writeln!(s, "trees: {}", self.rows.len());
        if !self.rows.is_empty() {
            let _ = writeln!(
                s,
                "\n{:<8} {:>5}  {:>15}  {:>15}  {:>15}  {:>15}  {:>15}",
                "group", "trees", "gt width", "est width", "gt height", "est height", "ndvi"
            );
            let mut groups: Vec<&str> = Vec::new();
            for r in &self.rows {
                if !groups.contains(&r.row_group.as_str()) {
                    groups.push(&r.row_group);
                }
            }
            groups.sort_by_key(|g| self.rows.iter().position(|r| r.row_group == *g));
            for g in groups {
                let rows: Vec<&TreeRow> = self.rows.iter().filter(|r| r.row_group == g).collect();
                let stat = |values: Vec<f64>| match mean_std(&values) {
                    Some((m, sd)) => format!("{m:.3} +/- {sd:.3}"),
                    None => "-".to_string(),
                };
                let _ = writeln!(
                    s,
                    "{:<8} {:>5}  {:>15}  {:>15}  {:>15}  {:>15}  {:>15}",
                    g,
                    rows.len(),
                    stat(rows.iter().filter_map(|r| r.gt_width).collect()),
                    stat(rows.iter().map(|r| r.est_width).collect()),
                    stat(rows.iter().filter_map(|r| r.gt_height).collect()),
                    stat(rows.iter().map(|r| r.est_height).collect()),
                    stat(rows.iter().filter_map(|r| r.ndvi_mean).collect()),
                );
            }
        }
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2} %"));
        let _ = writeln!(s, "\nwidth MAPE: {}", pct(self.width_mape));
        let _ = writeln!(s, "height MAPE: {}", pct(self.height_mape));
        if let Some(a) = self.association {
            let _ = writeln!(s, "\nassociation");
            let _ = writeln!(s, "confirmed landmarks: {}", a.confirmed_landmarks);
            let _ = writeln!(s, "assigned: {}", a.assigned);
            let _ = writeln!(
                s,
                "correct: {}",
                a.correct.map_or("-".to_string(), |c| c.to_string())
            );
            let _ = writeln!(s, "orphans: {}", a.orphans);
            let _ = writeln!(s, "duplicate trees: {}", a.duplicate_trees);
        }
        s
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    }
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| EvalError::io(path, e))?,
    ))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| EvalError::format(path, e))?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

#[derive(Serialize)]
struct LandmarkRow {
    landmark_id: u64,
    x: f64,
    y: f64,
    z: f64,
    num_pt: f64,
    ndvi: Option<f64>,
    observation_count: u32,
    created_at: f64,
    last_seen: f64,
    height: f64,
    width: f64,
    fov_limited: bool,
}

/// Output file names inside a run directory.
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const FIELD_MAP_CSV: &str = "field_map.csv";
pub const LANDMARKS_CSV: &str = "landmarks.csv";
pub const TIMING_CSV: &str = "timing.csv";

/// Writes the report, field map, landmark table and per-scan timing. Timing
/// lives only in its own file so the other outputs are reproducible.
pub fn write_run_outputs(dir: &Path, run: &RunOutput) -> Result<RunReport> {
    let report = RunReport::from_run(run)?;
    report.write_csv(&dir.join(REPORT_CSV))?;
    std::fs::write(dir.join(REPORT_TXT), report.to_text()).map_err(|e| EvalError::io(&dir.join(REPORT_TXT), e))?;
    write_field_map(&dir.join(FIELD_MAP_CSV), &run.field_map)?;
    write_rows(
        &dir.join(LANDMARKS_CSV),
        run.landmarks.iter().map(|l| LandmarkRow {
            landmark_id: l.id,
            x: l.state[0],
            y: l.state[1],
            z: l.state[2],
            num_pt: l.state[3],
            ndvi: l.ndvi(),
            observation_count: l.observation_count,
            created_at: l.created_at,
            last_seen: l.last_seen,
            height: l.height_est,
            width: l.width_est,
            fov_limited: l.fov_limited(),
        }),
    )?;
    write_rows(&dir.join(TIMING_CSV), &run.timings)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use arbor_core::georef::{Datum, GeoTreeRecord};

    fn map(xs: &[f64]) -> FieldMap {
        let records = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let mut r = GeoTreeRecord::new(i as u64, x, 10.0 * i as f64);
                r.gt_width = Some(2.0);
                r.gt_height = Some(4.0);
                r.est_width = 1.8;
                r.est_height = 4.4;
                r
            })
            .collect();
        FieldMap::new(Datum::default(), records).unwrap()
    }

    #[test]
    fn three_rows_are_named_by_depth() {
        let g = row_groups(&map(&[15.0, 5.0, 10.0, 5.0, 15.0, 10.0]));
        assert_eq!(g[&1], "front");
        assert_eq!(g[&3], "front");
        assert_eq!(g[&2], "middle");
        assert_eq!(g[&0], "back");
    }

    #[test]
    fn other_row_counts_are_numbered() {
        let g = row_groups(&map(&[1.0, 2.0]));
        assert_eq!(g[&0], "row_1");
        assert_eq!(g[&1], "row_2");
    }

    #[test]
    fn report_scores_all_trees() {
        let r = RunReport::from_map(&map(&[1.0, 2.0, 3.0])).unwrap();
        assert!((r.width_mape.unwrap() - 10.0).abs() < 1e-9);
        assert!((r.height_mape.unwrap() - 10.0).abs() < 1e-9);
        let text = r.to_text();
        assert!(text.contains("front"));
        assert!(text.contains("width MAPE: 10.00 %"));
    }

    #[test]
    fn zero_truth_is_an_error() {
        let mut m = map(&[1.0]);
        let mut records = m.records().to_vec();
        records[0].gt_width = Some(0.0);
        m = FieldMap::new(Datum::default(), records).unwrap();
        assert!(RunReport::from_map(&m).is_err());
    }

    #[test]
    fn csv_header_and_empty_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        RunReport::from_map(&map(&[1.0])).unwrap().write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "tree_id,row_group,gt_width,est_width,gt_height,est_height,ndvi_mean,n_observations\n\
             0,row_1,2.0,1.8,4.0,4.4,,0\n"
        );
    }
}
