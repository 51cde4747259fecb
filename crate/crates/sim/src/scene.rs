//! Analytic ray casting against the ground plane, trunk cylinders and crown
//! ellipsoids at one instant.

use std::f64::consts::TAU;

use nalgebra::Vector3;

use crate::orchard::{OrchardSpec, PlacedTree};

/// What a ray hit. Indices refer to [`Scene::trees`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Ground,
    Trunk(usize),
    Crown(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the unit ray direction.
    pub t: f64,
    pub surface: Surface,
}

/// Horizontal crown sway, `amplitude · sin(2π·freq·t + phase)` along a fixed
/// wind direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wind {
    pub amplitude: f64,
    pub freq: f64,
    /// Unit horizontal direction the crowns swing along.
    pub direction: [f64; 2],
}

#[derive(Debug, Clone, Copy)]
struct Crown {
    center: Vector3<f64>,
    radius: f64,
    half_height: f64,
    bound2: f64,
}

/// Orchard frozen at time `t`.
#[derive(Debug, Clone)]
pub struct Scene {
    pub trees: Vec<PlacedTree>,
    crowns: Vec<Crown>,
}

impl Scene {
    pub fn new(orchard: &OrchardSpec, wind: &Wind, t: f64) -> Self {
        let trees = orchard.placed();
        let crowns = trees
            .iter()
            .map(|tree| {
                let s = wind.amplitude * (TAU * wind.freq * t + tree.sway_phase).sin();
                let r = tree.shape.crown_radius_max;
                let c = tree.shape.crown_height / 2.0;
                Crown {
                    center: Vector3::new(
                        tree.x + s * wind.direction[0],
                        tree.y + s * wind.direction[1],
                        tree.shape.crown_center_z(),
                    ),
                    radius: r,
                    half_height: c,
                    bound2: r.max(c).powi(2),
                }
            })
            .collect();
        Self { trees, crowns }
    }

    /// Crown center at this instant, including sway.
    pub fn crown_center(&self, i: usize) -> Vector3<f64> {
        self.crowns[i].center
    }

    /// Nearest hit along `origin + t·dir` with `t` in `(0, max_range]`.
    /// `dir` must be unit length.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut consider = |t: f64, surface: Surface| {
            if t > 1e-9 && t <= max_range && best.is_none_or(|b| t < b.t) {
                best = Some(Hit { t, surface });
            }
        };
        if dir.z < 0.0 && origin.z > 0.0 {
            consider(-origin.z / dir.z, Surface::Ground);
        }
        for (i, (tree, crown)) in self.trees.iter().zip(&self.crowns).enumerate() {
            // cheap rejection on the crown's bounding sphere
            let oc = origin - crown.center;
            let along = oc.dot(dir);
            if oc.norm_squared() - along * along <= crown.bound2 {
                if let Some(t) = ray_ellipsoid(origin, dir, &crown.center, crown.radius, crown.half_height) {
                    consider(t, Surface::Crown(i));
                }
            }
            if let Some(t) = ray_trunk(origin, dir, tree) {
                consider(t, Surface::Trunk(i));
            }
        }
        best
    }
}

/// First positive intersection with the axis-aligned ellipsoid of horizontal
/// semi-axis `r` and vertical semi-axis `c`.
pub fn ray_ellipsoid(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    r: f64,
    c: f64,
) -> Option<f64> {
    let scale = Vector3::new(1.0 / r, 1.0 / r, 1.0 / c);
    let o = (origin - center).component_mul(&scale);
    let d = dir.component_mul(&scale);
    first_root(d.norm_squared(), 2.0 * o.dot(&d), o.norm_squared() - 1.0)
}

/// First positive intersection with a tree's trunk: a vertical cylinder from
/// the ground up to the crown center.
pub fn ray_trunk(origin: &Vector3<f64>, dir: &Vector3<f64>, tree: &PlacedTree) -> Option<f64> {
    let (ox, oy) = (origin.x - tree.x, origin.y - tree.y);
    let rad = tree.shape.trunk_radius;
    let t = first_root(
        dir.x * dir.x + dir.y * dir.y,
        2.0 * (ox * dir.x + oy * dir.y),
        ox * ox + oy * oy - rad * rad,
    )?;
    let z = origin.z + t * dir.z;
    (0.0..=tree.shape.crown_center_z()).contains(&z).then_some(t)
}

/// Smallest positive root of `a t² + b t + c`, using the cancellation-free
/// form of the quadratic formula.
fn first_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a <= 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (mut t0, mut t1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    if t0 > 1e-12 {
        Some(t0)
    } else if t1 > 1e-12 {
        Some(t1)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchard::TreeShape;

    fn lone_tree(x: f64) -> OrchardSpec {
        OrchardSpec {
            rows: 1,
            cols: 1,
            origin_x: x,
            origin_y: 0.0,
            trees: vec![TreeShape::with_size(2.0, 2.6)],
            ..OrchardSpec::default()
        }
    }

    #[test]
    fn ground_hit_distance() {
        let scene = Scene::new(&OrchardSpec::empty(), &Wind::default(), 0.0);
        let e = -10f64.to_radians();
        let dir = Vector3::new(e.cos(), 0.0, e.sin());
        let hit = scene.cast(&Vector3::new(0.0, 0.0, 0.5), &dir, 30.0).unwrap();
        assert_eq!(hit.surface, Surface::Ground);
        assert!((hit.t - 0.5 / (-e).sin()).abs() < 1e-12);
    }

    #[test]
    fn crown_hit_is_exact() {
        // horizontal ray through the crown center: hit at x - r
        let scene = Scene::new(&lone_tree(5.0), &Wind::default(), 0.0);
        let z = TreeShape::with_size(2.0, 2.6).crown_center_z();
        let hit = scene
            .cast(&Vector3::new(0.0, 0.0, z), &Vector3::new(1.0, 0.0, 0.0), 30.0)
            .unwrap();
        assert_eq!(hit.surface, Surface::Crown(0));
        assert!((hit.t - 4.0).abs() < 1e-12);
    }

    #[test]
    fn oblique_crown_hit_lies_on_surface() {
        let scene = Scene::new(&lone_tree(5.0), &Wind::default(), 0.0);
        let shape = TreeShape::with_size(2.0, 2.6);
        let origin = Vector3::new(0.3, -0.4, 0.5);
        for k in 0..50 {
            let a = -0.15 + k as f64 * 0.006;
            let dir = Vector3::new(1.0, a, 0.12 + a / 3.0).normalize();
            if let Some(Hit { t, surface: Surface::Crown(_) }) = scene.cast(&origin, &dir, 30.0) {
                let p = origin + dir * t;
                let q = (p.x - 5.0).powi(2) / 1.0 + p.y.powi(2) / 1.0
                    + (p.z - shape.crown_center_z()).powi(2) / (shape.crown_height / 2.0).powi(2);
                assert!((q - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trunk_below_crown() {
        let scene = Scene::new(&lone_tree(5.0), &Wind::default(), 0.0);
        let hit = scene
            .cast(&Vector3::new(0.0, 0.0, 0.3), &Vector3::new(1.0, 0.0, 0.0), 30.0)
            .unwrap();
        assert_eq!(hit.surface, Surface::Trunk(0));
        assert!((hit.t - 4.92).abs() < 1e-12);
    }

    #[test]
    fn range_limit_and_sky() {
        let scene = Scene::new(&lone_tree(5.0), &Wind::default(), 0.0);
        assert!(scene
            .cast(&Vector3::new(0.0, 0.0, 1.5), &Vector3::new(1.0, 0.0, 0.0), 3.0)
            .is_none());
        assert!(scene
            .cast(&Vector3::new(0.0, 0.0, 0.5), &Vector3::new(0.0, 0.0, 1.0), 30.0)
            .is_none());
    }

    #[test]
    fn wind_moves_crown() {
        let wind = Wind {
            amplitude: 0.1,
            freq: 0.25,
            direction: [1.0, 0.0],
        };
        let o = lone_tree(5.0);
        let phase = o.placed()[0].sway_phase;
        let t = (std::f64::consts::FRAC_PI_2 - phase).rem_euclid(TAU) / (TAU * 0.25);
        let scene = Scene::new(&o, &wind, t);
        assert!((scene.crown_center(0).x - 5.1).abs() < 1e-9);
    }
}
