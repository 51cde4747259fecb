//! Parametric orchard: a grid of trees, each a vertical cylinder trunk carrying
//! an ellipsoid crown, on flat ground at `z = 0`.

use arbor_core::georef::{Datum, FieldMap, GeoTreeRecord, TreeId};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeShape {
    pub trunk_height: f64,
    pub trunk_radius: f64,
    pub crown_height: f64,
    pub crown_radius_max: f64,
    pub leaf_ndvi_mean: f64,
    pub leaf_ndvi_std: f64,
}

impl TreeShape {
    /// Shape with the given overall width and height on a 0.6 m trunk.
    pub fn with_size(width: f64, height: f64) -> Self {
        Self {
            trunk_height: 0.6,
            trunk_radius: 0.08,
            crown_height: height - 0.6,
            crown_radius_max: width / 2.0,
            leaf_ndvi_mean: 0.62,
            leaf_ndvi_std: 0.05,
        }
    }

    pub fn width(&self) -> f64 {
        2.0 * self.crown_radius_max
    }

    pub fn height(&self) -> f64 {
        self.trunk_height + self.crown_height
    }

    pub fn crown_center_z(&self) -> f64 {
        self.trunk_height + self.crown_height / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("trunk_height", self.trunk_height),
            ("trunk_radius", self.trunk_radius),
            ("crown_height", self.crown_height),
            ("crown_radius_max", self.crown_radius_max),
        ];
        for (name, v) in dims {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        if self.trunk_radius >= self.crown_radius_max {
            return Err(SimError::InvalidSpec("trunk must be narrower than the crown".into()));
        }
        if !(-1.0..=1.0).contains(&self.leaf_ndvi_mean) || !(self.leaf_ndvi_std >= 0.0) {
            return Err(SimError::InvalidSpec("leaf NDVI out of range".into()));
        }
        Ok(())
    }
}

/// A tree at its position in the local orchard frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedTree {
    pub tree_id: TreeId,
    pub x: f64,
    pub y: f64,
    pub shape: TreeShape,
    /// Phase of this tree's crown sway, radians.
    pub sway_phase: f64,
}

impl PlacedTree {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// `rows` run along +x (front, middle, back, ...) and `cols` across y. Tree
/// `(r, c)` has id `r·cols + c` and stands at
/// `(origin_x + r·spacing_x, origin_y + c·spacing_y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchardSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    /// Row-major, `rows·cols` entries.
    pub trees: Vec<TreeShape>,
    pub datum: Datum,
}

impl Default for OrchardSpec {
    /// Three rows of two trees, 5 m apart both ways, sized like a young
    /// orchard block: widths 2.71 / 2.67 / 2.71 m and heights 2.62 / 2.74 /
    /// 2.68 m for the front, middle and back rows.
    fn default() -> Self {
        let rows = [(2.71, 2.62), (2.67, 2.74), (2.71, 2.68)];
        Self {
            rows: 3,
            cols: 2,
            spacing_x: 5.0,
            spacing_y: 5.0,
            origin_x: 6.5,
            origin_y: -2.5,
            trees: rows
                .iter()
                .flat_map(|&(w, h)| [TreeShape::with_size(w, h); 2])
                .collect(),
            datum: Datum {
                zone: 32,
                north: true,
                origin_x: 652_000.0,
                origin_y: 5_105_000.0,
            },
        }
    }
}

impl OrchardSpec {
    /// Grid of identical trees.
    pub fn uniform(rows: usize, cols: usize, spacing: f64, shape: TreeShape) -> Self {
        Self {
            rows,
            cols,
            spacing_x: spacing,
            spacing_y: spacing,
            trees: vec![shape; rows * cols],
            ..Self::default()
        }
    }

    /// Orchard with no trees.
    pub fn empty() -> Self {
        Self {
            rows: 0,
            cols: 0,
            trees: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.len() != self.rows * self.cols {
            return Err(SimError::InvalidSpec(format!(
                "{} tree shapes for a {}x{} grid",
                self.trees.len(),
                self.rows,
                self.cols
            )));
        }
        if !(self.spacing_x > 0.0 && self.spacing_y > 0.0) {
            return Err(SimError::InvalidSpec("spacings must be positive".into()));
        }
        self.trees.iter().try_for_each(TreeShape::validate)
    }

    pub fn placed(&self) -> Vec<PlacedTree> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| {
                let id = (r * self.cols + c) as TreeId;
                PlacedTree {
                    tree_id: id,
                    x: self.origin_x + r as f64 * self.spacing_x,
                    y: self.origin_y + c as f64 * self.spacing_y,
                    shape: self.trees[r * self.cols + c],
                    // golden-angle spread keeps neighbours out of phase
                    sway_phase: id as f64 * 2.399_963_229_728_653,
                }
            })
            .collect()
    }

    /// Planar center of the grid.
    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(
            self.origin_x + (self.rows.max(1) - 1) as f64 * self.spacing_x / 2.0,
            self.origin_y + (self.cols.max(1) - 1) as f64 * self.spacing_y / 2.0,
        )
    }

    /// Registry holding every tree's UTM position and true width and height.
    pub fn ground_truth(&self) -> FieldMap {
        let records = self
            .placed()
            .iter()
            .map(|t| {
                let utm = self.datum.to_utm(&t.position());
                let mut r = GeoTreeRecord::new(t.tree_id, utm.x, utm.y);
                r.gt_width = Some(t.shape.width());
                r.gt_height = Some(t.shape.height());
                r
            })
            .collect();
        FieldMap::new(self.datum, records).expect("grid ids are unique")
    }
}
