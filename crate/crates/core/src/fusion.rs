//! NDVI computation, vegetation masking and LiDAR colorization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Projection, RigidTransform, RingedPointCloud};

/// Raw red / green / near-infrared frame. Channels are row-major, normalized
/// reflectance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgnFrame {
    pub timestamp: f64,
    pub width: u32,
    pub height: u32,
    pub red: Vec<f64>,
    pub green: Vec<f64>,
    pub nir: Vec<f64>,
}

impl RgnFrame {
    pub fn new(timestamp: f64, width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            timestamp,
            width,
            height,
            red: vec![0.0; n],
            green: vec![0.0; n],
            nir: vec![0.0; n],
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width as usize * self.height as usize;
        if self.red.len() != n || self.green.len() != n || self.nir.len() != n {
            return Err(Error::DegenerateInput(format!(
                "RGN channel sizes {}/{}/{} do not match {}x{}",
                self.red.len(),
                self.green.len(),
                self.nir.len(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

/// Single-channel NDVI raster and its vegetation mask. Invalid pixels (zero
/// denominator) hold `NaN` and are never masked.
#[derive(Debug, Clone, PartialEq)]
pub struct NdviFrame {
    pub width: u32,
    pub height: u32,
    pub ndvi: Vec<f64>,
    pub mask: Vec<bool>,
}

impl NdviFrame {
    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn value(&self, x: u32, y: u32) -> f64 {
        self.ndvi[self.index(x, y)]
    }

    pub fn is_vegetation(&self, x: u32, y: u32) -> bool {
        self.mask[self.index(x, y)]
    }
}

/// Half-open NDVI interval `(lo, hi]` that counts as vegetation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdviThreshold {
    pub lo: f64,
    pub hi: f64,
}

impl Default for NdviThreshold {
    fn default() -> Self {
        Self { lo: -0.3, hi: 1.0 }
    }
}

impl NdviThreshold {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidThreshold { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        self.lo < v && v <= self.hi
    }
}

/// `(nir - red) / (nir + red)`, or `NaN` when the denominator is zero.
#[inline]
pub fn ndvi_value(nir: f64, red: f64) -> f64 {
    let den = nir + red;
    if den == 0.0 {
        f64::NAN
    } else {
        (nir - red) / den
    }
}

/// Per-pixel NDVI; the mask is left all-false until [`threshold_mask`].
pub fn compute_ndvi(frame: &RgnFrame) -> NdviFrame {
    let ndvi: Vec<f64> = frame
        .nir
        .iter()
        .zip(&frame.red)
        .map(|(&n, &r)| ndvi_value(n, r))
        .collect();
    NdviFrame {
        width: frame.width,
        height: frame.height,
        mask: vec![false; ndvi.len()],
        ndvi,
    }
}

pub fn threshold_mask(ndvi: &NdviFrame, lo: f64, hi: f64) -> Result<NdviFrame> {
    let range = NdviThreshold::new(lo, hi)?;
    Ok(NdviFrame {
        width: ndvi.width,
        height: ndvi.height,
        mask: ndvi.ndvi.iter().map(|&v| range.contains(v)).collect(),
        ndvi: ndvi.ndvi.clone(),
    })
}

/// Attaches NDVI to LiDAR points through the camera.
///
/// In-view points on vegetation pixels take that pixel's NDVI, in-view points
/// on non-vegetation pixels are dropped, and out-of-view points pass through
/// without NDVI. Lookup is nearest-pixel.
pub fn colorize_cloud(
    cloud: &RingedPointCloud,
    ndvi: &NdviFrame,
    cam: &CameraModel,
    cam_from_lidar: &RigidTransform,
) -> RingedPointCloud {
    let mut points = Vec::with_capacity(cloud.points.len());
    for p in &cloud.points {
        let q = cam_from_lidar.apply(&p.position());
        let pixel = match cam.project(&q) {
            Projection::InView { x, y } if x < ndvi.width && y < ndvi.height => Some((x, y)),
            _ => None,
        };
        match pixel {
            Some((x, y)) => {
                if ndvi.is_vegetation(x, y) {
                    let mut p = *p;
                    p.ndvi = Some(ndvi.value(x, y));
                    points.push(p);
                }
            }
            None => {
                let mut p = *p;
                p.ndvi = None;
                points.push(p);
            }
        }
    }
    cloud.with_points(points)
}

/// Index of the newest frame at or before `t` and no older than `max_skew`.
/// `timestamps` must be sorted ascending.
pub fn pair_frame(timestamps: &[f64], t: f64, max_skew: f64) -> Option<usize> {
    let idx = timestamps.partition_point(|&ft| ft <= t);
    if idx == 0 {
        return None;
    }
    let i = idx - 1;
    (t - timestamps[i] <= max_skew).then_some(i)
}
