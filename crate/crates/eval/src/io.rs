//! Log formats: scans, poses, RGN frames and field maps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use arbor_core::fusion::RgnFrame;
use arbor_core::georef::{Datum, FieldMap, GeoTreeRecord};
use arbor_core::{RingedPoint, RingedPointCloud, RobotPose};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::config::ScanFormat;
use crate::error::{EvalError, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| EvalError::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| EvalError::io(path, e))?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> EvalError + '_ {
    move |e| EvalError::format(path, e)
}

// ---------------------------------------------------------------- scans

#[derive(Debug, Serialize, Deserialize)]
struct ScanRow {
    timestamp: f64,
    x: f64,
    y: f64,
    z: f64,
    ring_id: u16,
}

/// Magic prefix of the binary scan log.
pub const SCAN_MAGIC: &[u8; 4] = b"ARSC";

/// Streams scans to disk in the chosen format.
pub enum ScanWriter {
    Csv(Box<csv::Writer<BufWriter<File>>>, PathBuf),
    Binary(BufWriter<File>, PathBuf),
}

impl ScanWriter {
    pub fn create(path: &Path, format: ScanFormat) -> Result<Self> {
        let out = create(path)?;
        Ok(match format {
            ScanFormat::Csv => Self::Csv(Box::new(csv::Writer::from_writer(out)), path.to_path_buf()),
            ScanFormat::Binary => {
                let mut out = out;
                out.write_all(SCAN_MAGIC).map_err(|e| EvalError::io(path, e))?;
                Self::Binary(out, path.to_path_buf())
            }
        })
    }

    /// CSV rows `timestamp,x,y,z,ring_id`, or one binary block: `u32` point
    /// count, `f64` timestamp, then `f64 x, y, z` and `u32 ring_id` per point.
    pub fn write(&mut self, cloud: &RingedPointCloud) -> Result<()> {
        match self {
            Self::Csv(w, path) => {
                for p in &cloud.points {
                    w.serialize(ScanRow {
                        timestamp: cloud.timestamp,
                        x: p.x,
                        y: p.y,
                        z: p.z,
                        ring_id: p.ring_id,
                    })
                    .map_err(csv_err(path))?;
                }
                Ok(())
            }
            Self::Binary(w, path) => {
                let io = |e| EvalError::io(path, e);
                w.write_u32::<LittleEndian>(cloud.points.len() as u32).map_err(io)?;
                w.write_f64::<LittleEndian>(cloud.timestamp).map_err(io)?;
                for p in &cloud.points {
                    w.write_f64::<LittleEndian>(p.x).map_err(io)?;
                    w.write_f64::<LittleEndian>(p.y).map_err(io)?;
                    w.write_f64::<LittleEndian>(p.z).map_err(io)?;
                    w.write_u32::<LittleEndian>(p.ring_id as u32).map_err(io)?;
                }
                Ok(())
            }
        }
    }

    pub fn finish(self) -> Result<()> {
        match self {
            Self::Csv(mut w, path) => w.flush().map_err(|e| EvalError::io(&path, e)),
            Self::Binary(mut w, path) => w.flush().map_err(|e| EvalError::io(&path, e)),
        }
    }
}

enum ScanSource {
    Csv {
        rows: csv::DeserializeRecordsIntoIter<BufReader<File>, ScanRow>,
        pending: Option<ScanRow>,
    },
    Binary(BufReader<File>),
}

/// Iterator over the scans of a log, oldest first. Fails on a timestamp that
/// does not increase.
pub struct ScanReader {
    source: ScanSource,
    path: PathBuf,
    last: Option<f64>,
    done: bool,
}

impl ScanReader {
    pub fn open(path: &Path, format: ScanFormat) -> Result<Self> {
        let mut file = open(path)?;
        let source = match format {
            ScanFormat::Csv => ScanSource::Csv {
                rows: csv::Reader::from_reader(file).into_deserialize(),
                pending: None,
            },
            ScanFormat::Binary => {
                let mut magic = [0u8; 4];
                file.read_exact(&mut magic).map_err(|e| EvalError::io(path, e))?;
                if &magic != SCAN_MAGIC {
                    return Err(EvalError::format(path, "not a binary scan log"));
                }
                ScanSource::Binary(file)
            }
        };
        Ok(Self {
            source,
            path: path.to_path_buf(),
            last: None,
            done: false,
        })
    }

    fn next_scan(&mut self) -> Result<Option<RingedPointCloud>> {
        let path = self.path.clone();
        match &mut self.source {
            ScanSource::Csv { rows, pending } => {
                let first = match pending.take() {
                    Some(r) => r,
                    None => match rows.next() {
                        None => return Ok(None),
                        Some(r) => r.map_err(csv_err(&path))?,
                    },
                };
                let t = first.timestamp;
                let mut points = vec![RingedPoint::new(first.x, first.y, first.z, first.ring_id)];
                for row in rows.by_ref() {
                    let row = row.map_err(csv_err(&path))?;
                    if row.timestamp != t {
                        *pending = Some(row);
                        break;
                    }
                    points.push(RingedPoint::new(row.x, row.y, row.z, row.ring_id));
                }
                Ok(Some(RingedPointCloud::new(t, "lidar", points)))
            }
            ScanSource::Binary(r) => {
                let n = match r.read_u32::<LittleEndian>() {
                    Ok(n) => n as usize,
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
                    Err(e) => return Err(EvalError::io(&path, e)),
                };
                let io = |e| EvalError::format(&path, format!("truncated scan block: {e}"));
                let t = r.read_f64::<LittleEndian>().map_err(io)?;
                let mut points = Vec::with_capacity(n);
                for _ in 0..n {
                    let x = r.read_f64::<LittleEndian>().map_err(io)?;
                    let y = r.read_f64::<LittleEndian>().map_err(io)?;
                    let z = r.read_f64::<LittleEndian>().map_err(io)?;
                    let ring = r.read_u32::<LittleEndian>().map_err(io)?;
                    let ring = u16::try_from(ring).map_err(|_| EvalError::format(&path, format!("ring id {ring} out of range")))?;
                    points.push(RingedPoint::new(x, y, z, ring));
                }
                Ok(Some(RingedPointCloud::new(t, "lidar", points)))
            }
        }
    }
}

impl Iterator for ScanReader {
    type Item = Result<RingedPointCloud>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = match self.next_scan() {
            Ok(Some(cloud)) => {
                if !cloud.timestamp.is_finite() || self.last.is_some_and(|t| cloud.timestamp <= t) {
                    Err(EvalError::format(
                        &self.path,
                        format!("scan timestamp {} does not increase", cloud.timestamp),
                    ))
                } else {
                    self.last = Some(cloud.timestamp);
                    Ok(cloud)
                }
            }
            Ok(None) => {
                self.done = true;
                return None;
            }
            Err(e) => Err(e),
        };
        if item.is_err() {
            self.done = true;
        }
        Some(item)
    }
}

// ---------------------------------------------------------------- poses

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    timestamp: f64,
    x: f64,
    y: f64,
    theta: f64,
    v_x: f64,
    omega: f64,
    degraded_flag: u8,
}

pub fn write_poses(path: &Path, poses: &[RobotPose]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for p in poses {
        w.serialize(PoseRow {
            timestamp: p.timestamp,
            x: p.x,
            y: p.y,
            theta: p.theta,
            v_x: p.v_x,
            omega: p.omega,
            degraded_flag: p.degraded as u8,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

pub fn read_poses(path: &Path) -> Result<Vec<RobotPose>> {
    let mut out: Vec<RobotPose> = Vec::new();
    for row in csv::Reader::from_reader(open(path)?).into_deserialize::<PoseRow>() {
        let r = row.map_err(csv_err(path))?;
        if out.last().is_some_and(|p| r.timestamp <= p.timestamp) {
            return Err(EvalError::format(path, format!("pose timestamp {} does not increase", r.timestamp)));
        }
        if r.degraded_flag > 1 {
            return Err(EvalError::format(path, "degraded_flag must be 0 or 1"));
        }
        out.push(RobotPose {
            timestamp: r.timestamp,
            x: r.x,
            y: r.y,
            theta: r.theta,
            v_x: r.v_x,
            omega: r.omega,
            degraded: r.degraded_flag == 1,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------- frames

/// One row of the frame index: channel images relative to the index file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub timestamp: f64,
    pub red: PathBuf,
    pub green: PathBuf,
    pub nir: PathBuf,
}

fn save_channel(path: &Path, width: u32, height: u32, values: &[f64]) -> Result<()> {
    let data: Vec<u16> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width, height, data).expect("channel length matches frame size");
    img.save(path).map_err(|e| EvalError::format(path, e))
}

fn load_channel(path: &Path) -> Result<(u32, u32, Vec<f64>)> {
    let img = image::open(path).map_err(|e| EvalError::format(path, e))?.into_luma16();
    let (w, h) = img.dimensions();
    Ok((w, h, img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()))
}

/// Frame log: 16-bit grayscale PNG per channel plus a CSV index
/// `index,timestamp,red,green,nir`.
pub struct FrameLog {
    dir: PathBuf,
    index_path: PathBuf,
    pub entries: Vec<FrameEntry>,
}

impl FrameLog {
    pub fn create(index_path: &Path) -> Result<Self> {
        let dir = index_path.parent().map(Path::to_path_buf).unwrap_or_default();
        std::fs::create_dir_all(&dir).map_err(|e| EvalError::io(&dir, e))?;
        Ok(Self {
            dir,
            index_path: index_path.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn open(index_path: &Path) -> Result<Self> {
        let dir = index_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut entries: Vec<FrameEntry> = Vec::new();
        for row in csv::Reader::from_reader(open(index_path)?).into_deserialize::<FrameEntry>() {
            let e = row.map_err(csv_err(index_path))?;
            if entries.last().is_some_and(|p| e.timestamp <= p.timestamp) {
                return Err(EvalError::format(index_path, "frame timestamps must increase"));
            }
            entries.push(e);
        }
        Ok(Self {
            dir,
            index_path: index_path.to_path_buf(),
            entries,
        })
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.timestamp).collect()
    }

    pub fn push(&mut self, index: usize, frame: &RgnFrame) -> Result<()> {
        let names = ["red", "green", "nir"].map(|c| PathBuf::from(format!("frame_{index:06}_{c}.png")));
        let channels = [&frame.red, &frame.green, &frame.nir];
        for (name, values) in names.iter().zip(channels) {
            save_channel(&self.dir.join(name), frame.width, frame.height, values)?;
        }
        let [red, green, nir] = names;
        self.entries.push(FrameEntry {
            index,
            timestamp: frame.timestamp,
            red,
            green,
            nir,
        });
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        let mut w = csv::Writer::from_writer(create(&self.index_path)?);
        for e in &self.entries {
            w.serialize(e).map_err(csv_err(&self.index_path))?;
        }
        w.flush().map_err(|e| EvalError::io(&self.index_path, e))
    }

    /// Decodes entry `i` (position in the index, not its `index` field).
    pub fn load(&self, i: usize) -> Result<RgnFrame> {
        let e = &self.entries[i];
        let (w, h, red) = load_channel(&self.dir.join(&e.red))?;
        let (w2, h2, green) = load_channel(&self.dir.join(&e.green))?;
        let (w3, h3, nir) = load_channel(&self.dir.join(&e.nir))?;
        if (w, h) != (w2, h2) || (w, h) != (w3, h3) {
            return Err(EvalError::format(&self.dir.join(&e.red), "channel sizes differ"));
        }
        Ok(RgnFrame {
            timestamp: e.timestamp,
            width: w,
            height: h,
            red,
            green,
            nir,
        })
    }
}

// ---------------------------------------------------------------- field map

#[derive(Debug, Serialize, Deserialize)]
struct FieldMapRow {
    tree_id: u64,
    utm_x: f64,
    utm_y: f64,
    gt_width: Option<f64>,
    gt_height: Option<f64>,
    est_width: f64,
    est_height: f64,
    est_ndvi: Option<f64>,
    match_count: u32,
    last_update: Option<f64>,
}

pub fn write_field_map(path: &Path, map: &FieldMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in map.records() {
        w.serialize(FieldMapRow {
            tree_id: r.tree_id,
            utm_x: r.utm_x,
            utm_y: r.utm_y,
            gt_width: r.gt_width,
            gt_height: r.gt_height,
            est_width: r.est_width,
            est_height: r.est_height,
            est_ndvi: r.est_ndvi_mean,
            match_count: r.match_count,
            last_update: r.last_update,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

pub fn read_field_map(path: &Path) -> Result<FieldMap> {
    let mut records = Vec::new();
    for row in csv::Reader::from_reader(open(path)?).into_deserialize::<FieldMapRow>() {
        let r = row.map_err(csv_err(path))?;
        records.push(GeoTreeRecord {
            tree_id: r.tree_id,
            utm_x: r.utm_x,
            utm_y: r.utm_y,
            gt_width: r.gt_width,
            gt_height: r.gt_height,
            est_width: r.est_width,
            est_height: r.est_height,
            est_ndvi_mean: r.est_ndvi,
            last_update: r.last_update,
            match_count: r.match_count,
        });
    }
    FieldMap::new(Datum::default(), records).map_err(|e| EvalError::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clouds() -> Vec<RingedPointCloud> {
        (0..4)
            .map(|k| {
                let pts = (0..k * 3)
                    .map(|i| RingedPoint::new(i as f64 * 0.1, -1.0 / 3.0, 1e-7 * i as f64, (i % 16) as u16))
                    .collect();
                RingedPointCloud::new(k as f64 * 0.1, "lidar", pts)
            })
            .collect()
    }

    #[test]
    fn binary_scans_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scans.bin");
        let mut w = ScanWriter::create(&path, ScanFormat::Binary).unwrap();
        for c in clouds() {
            w.write(&c).unwrap();
        }
        w.finish().unwrap();
        let back: Vec<_> = ScanReader::open(&path, ScanFormat::Binary).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(back, clouds());
    }

    #[test]
    fn csv_scans_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        let mut w = ScanWriter::create(&path, ScanFormat::Csv).unwrap();
        for c in clouds() {
            w.write(&c).unwrap();
        }
        w.finish().unwrap();
        let back: Vec<_> = ScanReader::open(&path, ScanFormat::Csv).unwrap().collect::<Result<_>>().unwrap();
        // empty scans have no rows in CSV
        assert_eq!(back, clouds()[1..].to_vec());
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("timestamp,x,y,z,ring_id\n"));
    }

    #[test]
    fn timestamp_regression_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        std::fs::write(&path, "timestamp,x,y,z,ring_id\n0.2,1,0,0,1\n0.1,1,0,0,1\n").unwrap();
        let items: Vec<_> = ScanReader::open(&path, ScanFormat::Csv).unwrap().collect();
        assert!(items[0].is_ok());
        assert!(items[1].is_err());
        assert_eq!(items.len(), 2);
    }

    #[test]
    fn corrupt_rows_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scans.csv");
        std::fs::write(&path, "timestamp,x,y,z,ring_id\n0.2,abc,0,0,1\n").unwrap();
        assert!(ScanReader::open(&path, ScanFormat::Csv).unwrap().next().unwrap().is_err());
        assert!(ScanReader::open(&dir.path().join("missing.csv"), ScanFormat::Csv).is_err());
        std::fs::write(&path, "nope").unwrap();
        assert!(ScanReader::open(&path, ScanFormat::Binary).is_err());
    }

    #[test]
    fn poses_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.csv");
        let mut b = RobotPose::new(0.1, 652_000.123, 5_105_000.5, -0.3).with_twist(0.5, 0.01);
        b.degraded = true;
        let poses = vec![RobotPose::new(0.0, 1.0, 2.0, 0.1), b];
        write_poses(&path, &poses).unwrap();
        assert_eq!(read_poses(&path).unwrap(), poses);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("timestamp,x,y,theta,v_x,omega,degraded_flag\n"));
    }

    #[test]
    fn frames_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let index = dir.path().join("frames/index.csv");
        let mut frame = RgnFrame::new(0.5, 4, 3);
        for i in 0..12 {
            frame.red[i] = i as f64 / 12.0;
            frame.nir[i] = 1.0 - i as f64 / 12.0;
            frame.green[i] = 0.3;
        }
        let mut log = FrameLog::create(&index).unwrap();
        log.push(7, &frame).unwrap();
        log.finish().unwrap();
        let log = FrameLog::open(&index).unwrap();
        assert_eq!(log.timestamps(), vec![0.5]);
        let back = log.load(0).unwrap();
        assert_eq!((back.width, back.height), (4, 3));
        for i in 0..12 {
            assert!((back.red[i] - frame.red[i]).abs() <= 0.5 / 65535.0 + 1e-12);
            assert!((back.nir[i] - frame.nir[i]).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn field_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        let mut a = GeoTreeRecord::new(0, 652_006.5, 5_104_997.5);
        a.gt_width = Some(2.71);
        a.est_width = 2.6512345678901234;
        a.est_ndvi_mean = Some(0.61);
        a.last_update = Some(12.3);
        a.match_count = 40;
        let map = FieldMap::new(Datum::default(), vec![a, GeoTreeRecord::new(1, 1.0, 2.0)]).unwrap();
        write_field_map(&path, &map).unwrap();
        assert_eq!(read_field_map(&path).unwrap(), map);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "tree_id,utm_x,utm_y,gt_width,gt_height,est_width,est_height,est_ndvi,match_count,last_update\n"
        ));
    }
}
