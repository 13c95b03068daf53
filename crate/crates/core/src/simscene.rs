//! Analytic ground-truth scenes and a stochastic LiDAR return generator.
//!
//! Surfaces are infinitely thin rectangles. A pulse reaching a surface is
//! returned with probability `return_prob` and transmitted otherwise, so the
//! exact return distribution along any ray is a finite list of jumps.
//!
//! Scene files are TOML:
//!
//! ```toml
//! bounds_min = [-1.0, -16.0, -6.0]
//! bounds_max = [11.0, 16.0, 6.0]
//!
//! [[surface]]
//! kind = "plane"            # or "box"
//! origin = [5.0, 0.0, 0.0]  # rectangle or box center
//! normal = [-1.0, 0.0, 0.0] # ignored for boxes
//! extent = [12.0, 6.0]      # plane: width, height; box: [sx, sy, sz]
//! return_prob = 0.5
//! oblique_drop_deg = 89.0
//! ```
//!
//! A plane's width runs along `normalize(up × normal)` and its height along
//! `normal × width`, where `up` is +z unless the normal is within ~25° of
//! ±z, in which case it is +x.

use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{RangeSample, Ray};
use crate::sensor::{interpolate_pose, ray_directions, Pose, ScanFrame, SensorIntrinsics};
use crate::streams::stream;

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Plane,
    Box,
}

/// One surface as written in a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
    pub origin: [f64; 3],
    #[serde(default = "default_normal")]
    pub normal: [f64; 3],
    pub extent: Vec<f64>,
    pub return_prob: f64,
    #[serde(default = "default_oblique")]
    pub oblique_drop_deg: f64,
}

fn default_normal() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_oblique() -> f64 {
    90.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    #[serde(rename = "surface", default)]
    pub surfaces: Vec<SurfaceSpec>,
}

/// A finite two-sided rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    pub center: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub u_axis: Vector3<f64>,
    pub v_axis: Vector3<f64>,
    pub half_u: f64,
    pub half_v: f64,
}

impl Rect {
    pub fn new(center: Vector3<f64>, normal: Vector3<f64>, width: f64, height: f64) -> Result<Self> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| invalid("surface normal has zero length"))?;
        if !(width > 0.0 && height > 0.0) {
            return Err(invalid("surface extent must be positive"));
        }
        let up = if n.z.abs() > 0.9 {
            Vector3::x()
        } else {
            Vector3::z()
        };
        let u = up.cross(&n).normalize();
        let v = n.cross(&u);
        Ok(Self {
            center,
            normal: n,
            u_axis: u,
            v_axis: v,
            half_u: width / 2.0,
            half_v: height / 2.0,
        })
    }

    /// Distance along the ray and `|cos(incidence)|` of a hit, if any.
    pub fn intersect(&self, origin: &Vector3<f64>, direction: &Vector3<f64>) -> Option<(f64, f64)> {
        let denom = direction.dot(&self.normal);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.center - origin).dot(&self.normal) / denom;
        if t <= HIT_EPS {
            return None;
        }
        let local = origin + direction * t - self.center;
        if local.dot(&self.u_axis).abs() > self.half_u || local.dot(&self.v_axis).abs() > self.half_v {
            return None;
        }
        Some((t, denom.abs()))
    }

    pub fn corners(&self) -> [Vector3<f64>; 4] {
        let u = self.u_axis * self.half_u;
        let v = self.v_axis * self.half_v;
        [
            self.center + u + v,
            self.center + u - v,
            self.center - u + v,
            self.center - u - v,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSurface {
    pub rect: Rect,
    /// Probability of a return given that the pulse reaches the surface.
    pub return_prob: f64,
    /// Incidence angle (radians) beyond which a return becomes a drop.
    pub oblique_drop_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub surfaces: Vec<SceneSurface>,
    pub bounds_min: Vector3<f64>,
    pub bounds_max: Vector3<f64>,
    source: SceneFile,
}

/// One surface crossing along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub surface: usize,
    pub cos_incidence: f64,
}

/// Exact return distribution along a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueCdf {
    /// `(distance, probability)` for every surface that can return, ascending.
    pub jumps: Vec<(f64, f64)>,
    pub drop_probability: f64,
}

impl TrueCdf {
    pub fn total(&self) -> f64 {
        self.jumps.iter().map(|(_, h)| h).sum()
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.jumps
            .iter()
            .filter(|(d, _)| *d <= s)
            .map(|(_, h)| h)
            .sum()
    }

    /// Jumps that carry at least `min_height` probability.
    pub fn significant(&self, min_height: f64) -> Vec<(f64, f64)> {
        self.jumps
            .iter()
            .copied()
            .filter(|(_, h)| *h >= min_height)
            .collect()
    }
}

impl SceneSpec {
    pub fn from_file_spec(file: SceneFile) -> Result<Self> {
        let bounds_min = Vector3::from(file.bounds_min);
        let bounds_max = Vector3::from(file.bounds_max);
        if (bounds_max - bounds_min).iter().any(|e| !(*e > 0.0)) {
            return Err(invalid("scene bounds must have positive extent"));
        }
        let mut surfaces = Vec::new();
        for (i, spec) in file.surfaces.iter().enumerate() {
            if !(spec.return_prob > 0.0 && spec.return_prob <= 1.0) {
                return Err(invalid(format!(
                    "surface {i}: return_prob {} outside (0, 1]",
                    spec.return_prob
                )));
            }
            if !(spec.oblique_drop_deg > 0.0 && spec.oblique_drop_deg <= 90.0) {
                return Err(invalid(format!(
                    "surface {i}: oblique_drop_deg {} outside (0, 90]",
                    spec.oblique_drop_deg
                )));
            }
            let origin = Vector3::from(spec.origin);
            let rects = match spec.kind {
                SurfaceKind::Plane => {
                    if spec.extent.len() != 2 {
                        return Err(invalid(format!("surface {i}: plane extent needs 2 values")));
                    }
                    vec![Rect::new(origin, Vector3::from(spec.normal), spec.extent[0], spec.extent[1])?]
                }
                SurfaceKind::Box => {
                    if spec.extent.len() != 3 {
                        return Err(invalid(format!("surface {i}: box extent needs 3 values")));
                    }
                    box_faces(origin, [spec.extent[0], spec.extent[1], spec.extent[2]])?
                }
            };
            for rect in rects {
                let inside = rect.corners().iter().all(|c| {
                    (0..3).all(|k| c[k] >= bounds_min[k] - 1e-9 && c[k] <= bounds_max[k] + 1e-9)
                });
                if !inside {
                    return Err(invalid(format!("surface {i} extends outside the scene bounds")));
                }
                surfaces.push(SceneSurface {
                    rect,
                    return_prob: spec.return_prob,
                    oblique_drop_angle: spec.oblique_drop_deg.to_radians(),
                });
            }
        }
        Ok(Self {
            surfaces,
            bounds_min,
            bounds_max,
            source: file,
        })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_file_spec(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.source).expect("scene file serializes")
    }

    pub fn file_spec(&self) -> &SceneFile {
        &self.source
    }

    /// Every crossing within `(0, s_max]`, nearest first.
    pub fn intersections(&self, origin: &Vector3<f64>, direction: &Vector3<f64>, s_max: f64) -> Vec<Hit> {
        let mut hits: Vec<Hit> = self
            .surfaces
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                s.rect
                    .intersect(origin, direction)
                    .filter(|(t, _)| *t <= s_max)
                    .map(|(distance, cos_incidence)| Hit {
                        distance,
                        surface: i,
                        cos_incidence,
                    })
            })
            .collect();
        hits.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.surface.cmp(&b.surface)));
        hits
    }

    fn is_oblique(&self, hit: &Hit) -> bool {
        hit.cos_incidence < self.surfaces[hit.surface].oblique_drop_angle.cos()
    }

    pub fn true_cdf(&self, origin: &Vector3<f64>, direction: &Vector3<f64>, s_max: f64) -> TrueCdf {
        let mut reach = 1.0;
        let mut jumps = Vec::new();
        for hit in self.intersections(origin, direction, s_max) {
            let p = self.surfaces[hit.surface].return_prob;
            if !self.is_oblique(&hit) {
                jumps.push((hit.distance, reach * p));
            }
            reach *= 1.0 - p;
        }
        let total: f64 = jumps.iter().map(|(_, h)| h).sum();
        TrueCdf {
            jumps,
            drop_probability: 1.0 - total,
        }
    }

    pub fn sample(&self, origin: &Vector3<f64>, direction: &Vector3<f64>, s_max: f64, rng: &mut impl Rng) -> RangeSample {
        for hit in self.intersections(origin, direction, s_max) {
            let p = self.surfaces[hit.surface].return_prob;
            if p >= 1.0 || rng.gen::<f64>() < p {
                return if self.is_oblique(&hit) {
                    RangeSample::Drop
                } else {
                    RangeSample::Range(hit.distance)
                };
            }
        }
        RangeSample::Drop
    }
}

fn box_faces(center: Vector3<f64>, size: [f64; 3]) -> Result<Vec<Rect>> {
    let [sx, sy, sz] = size;
    let h = Vector3::new(sx, sy, sz) / 2.0;
    Ok(vec![
        Rect::new(center + Vector3::new(h.x, 0.0, 0.0), Vector3::x(), sy, sz)?,
        Rect::new(center - Vector3::new(h.x, 0.0, 0.0), -Vector3::x(), sy, sz)?,
        Rect::new(center + Vector3::new(0.0, h.y, 0.0), Vector3::y(), sx, sz)?,
        Rect::new(center - Vector3::new(0.0, h.y, 0.0), -Vector3::y(), sx, sz)?,
        // up = x for these two, so width runs along y
        Rect::new(center + Vector3::new(0.0, 0.0, h.z), Vector3::z(), sy, sx)?,
        Rect::new(center - Vector3::new(0.0, 0.0, h.z), -Vector3::z(), sy, sx)?,
    ])
}

/// Exact jump list along `ray`.
pub fn trace_true_cdf(scene: &SceneSpec, ray: &Ray) -> TrueCdf {
    scene.true_cdf(&ray.origin, &ray.direction, ray.s_max)
}

/// One stochastic measurement along `ray`.
pub fn sample_return(scene: &SceneSpec, ray: &Ray, rng: &mut impl Rng) -> RangeSample {
    scene.sample(&ray.origin, &ray.direction, ray.s_max, rng)
}

/// Start and end pose of each scan along a waypoint trajectory. A scan
/// starts at every waypoint but the last and ends one scan period later,
/// interpolated along the trajectory.
pub fn frame_poses(path: &[Pose], scan_period: f64) -> Result<Vec<(Pose, Pose)>> {
    if path.len() < 2 {
        return Err(invalid("a sensor path needs at least two waypoints"));
    }
    if path.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(invalid("sensor path timestamps must increase"));
    }
    let pose_at = |t: f64| {
        let k = path.partition_point(|p| p.timestamp <= t);
        if k >= path.len() {
            path[path.len() - 1].with_timestamp(t)
        } else {
            interpolate_pose(&path[k - 1], &path[k], t)
        }
    };
    Ok(path[..path.len() - 1]
        .iter()
        .map(|start| (start.clone(), pose_at(start.timestamp + scan_period)))
        .collect())
}

/// Simulates one scan per path segment. Each scan draws from its own
/// random stream keyed by `(seed, scan index)`.
pub fn generate_dataset(
    scene: &SceneSpec,
    path: &[Pose],
    intrinsics: &SensorIntrinsics,
    seed: u64,
) -> Result<Vec<ScanFrame>> {
    intrinsics.validate()?;
    frame_poses(path, intrinsics.scan_period)?
        .into_iter()
        .enumerate()
        .map(|(k, (start, end))| {
            let mut rng = stream(&[seed, k as u64, 0x5ca7]);
            let rays = ray_directions(intrinsics, &start, &end)?;
            let ranges = rays
                .iter()
                .map(|r| scene.sample(&r.origin, &r.direction, intrinsics.s_max, &mut rng))
                .collect();
            ScanFrame::new(intrinsics.clone(), start, end, ranges)
        })
        .collect()
}

/// Built-in scenes shipped with the crate.
pub mod canonical {
    use super::*;

    fn plane(origin: [f64; 3], normal: [f64; 3], extent: [f64; 2], p: f64, oblique: f64) -> SurfaceSpec {
        SurfaceSpec {
            kind: SurfaceKind::Plane,
            origin,
            normal,
            extent: extent.to_vec(),
            return_prob: p,
            oblique_drop_deg: oblique,
        }
    }

    fn build(bounds_min: [f64; 3], bounds_max: [f64; 3], surfaces: Vec<SurfaceSpec>) -> SceneSpec {
        SceneSpec::from_file_spec(SceneFile {
            bounds_min,
            bounds_max,
            surfaces,
        })
        .expect("canonical scenes are valid")
    }

    pub const NAMES: [&str; 5] = ["two_surface", "courtyard_toy", "street_toy", "one_wall", "drop_room"];

    pub fn by_name(name: &str) -> Option<SceneSpec> {
        match name {
            "two_surface" => Some(two_surface()),
            "courtyard_toy" => Some(courtyard_toy()),
            "street_toy" => Some(street_toy()),
            "one_wall" => Some(one_wall()),
            "drop_room" => Some(drop_room()),
            _ => None,
        }
    }

    /// A half-transparent screen 5 m ahead of an opaque wall at 10 m.
    pub fn two_surface() -> SceneSpec {
        build(
            [-1.0, -16.0, -6.0],
            [11.0, 16.0, 6.0],
            vec![
                plane([5.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [12.0, 6.0], 0.5, 89.0),
                plane([10.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [30.0, 10.0], 1.0, 89.0),
            ],
        )
    }

    pub const COURTYARD_HALF: f64 = 6.0;
    pub const WINDOW_HALF_WIDTH: f64 = 2.07;
    pub const WINDOW_Z: (f64, f64) = (-0.3, 1.0);
    pub const INTERIOR_OFFSET: f64 = 3.0;

    /// Four walls around the sensor, each with a glass window backed by an
    /// interior wall.
    pub fn courtyard_toy() -> SceneSpec {
        let h = COURTYARD_HALF;
        let (z_lo, z_hi) = (-2.5, 3.0);
        let (w_lo, w_hi) = WINDOW_Z;
        let ww = WINDOW_HALF_WIDTH;
        let mut surfaces = Vec::new();
        for k in 0..4 {
            let yaw = k as f64 * std::f64::consts::FRAC_PI_2;
            let (s, c) = yaw.sin_cos();
            // wall-local frame: outward axis (c, s), lateral axis (-s, c)
            let at = |d: f64, lat: f64, z: f64| [d * c - lat * s, d * s + lat * c, z];
            let normal = [-c, -s, 0.0];
            let side = (h - ww) / 2.0;
            let side_mid = ww + side;
            surfaces.push(plane(at(h, side_mid, (z_lo + z_hi) / 2.0), normal, [2.0 * side, z_hi - z_lo], 1.0, 89.0));
            surfaces.push(plane(at(h, -side_mid, (z_lo + z_hi) / 2.0), normal, [2.0 * side, z_hi - z_lo], 1.0, 89.0));
            surfaces.push(plane(at(h, 0.0, (z_lo + w_lo) / 2.0), normal, [2.0 * ww, w_lo - z_lo], 1.0, 89.0));
            surfaces.push(plane(at(h, 0.0, (w_hi + z_hi) / 2.0), normal, [2.0 * ww, z_hi - w_hi], 1.0, 89.0));
            surfaces.push(plane(at(h, 0.0, (w_lo + w_hi) / 2.0), normal, [2.0 * ww, w_hi - w_lo], 0.5, 89.0));
            surfaces.push(plane(at(h + INTERIOR_OFFSET, 0.0, 0.5), normal, [8.0, 4.0], 1.0, 89.0));
        }
        let b = h + INTERIOR_OFFSET + 0.5;
        build([-b, -b, -3.0], [b, b, 3.5], surfaces)
    }

    /// Opaque facades along a short street, closed at both ends, with two
    /// parked boxes.
    pub fn street_toy() -> SceneSpec {
        let mut surfaces = vec![
            plane([0.0, 5.0, 1.5], [0.0, -1.0, 0.0], [24.0, 10.0], 1.0, 89.0),
            plane([0.0, -5.0, 1.5], [0.0, 1.0, 0.0], [24.0, 10.0], 1.0, 89.0),
            plane([12.0, 0.0, 1.5], [-1.0, 0.0, 0.0], [10.0, 10.0], 1.0, 89.0),
            plane([-12.0, 0.0, 1.5], [1.0, 0.0, 0.0], [10.0, 10.0], 1.0, 89.0),
        ];
        for (center, size) in [([4.0, -3.2, -0.6], [4.0, 1.8, 1.6]), ([-5.0, 3.0, -0.6], [4.4, 1.9, 1.8])] {
            surfaces.push(SurfaceSpec {
                kind: SurfaceKind::Box,
                origin: center,
                normal: default_normal(),
                extent: size.to_vec(),
                return_prob: 1.0,
                oblique_drop_deg: 89.0,
            });
        }
        build([-12.5, -5.5, -4.0], [12.5, 5.5, 7.0], surfaces)
    }

    /// A single opaque wall at x = 8, meant to be scanned from both sides.
    pub fn one_wall() -> SceneSpec {
        build(
            [-1.0, -16.0, -5.0],
            [17.0, 16.0, 5.0],
            vec![plane([8.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [30.0, 8.0], 1.0, 89.0)],
        )
    }

    /// A closed room whose walls drop oblique returns, with an open doorway
    /// on the −x side.
    pub fn drop_room() -> SceneSpec {
        let h = 5.0;
        let door = 1.2;
        let side = (2.0 * h - 2.0 * door) / 2.0;
        let oblique = 35.0;
        build(
            [-h - 0.5, -h - 0.5, -3.5],
            [h + 0.5, h + 0.5, 3.5],
            vec![
                plane([h, 0.0, 0.0], [-1.0, 0.0, 0.0], [2.0 * h, 6.0], 1.0, oblique),
                plane([0.0, h, 0.0], [0.0, -1.0, 0.0], [2.0 * h, 6.0], 1.0, oblique),
                plane([0.0, -h, 0.0], [0.0, 1.0, 0.0], [2.0 * h, 6.0], 1.0, oblique),
                plane([-h, door + side / 2.0, 0.0], [1.0, 0.0, 0.0], [side, 6.0], 1.0, oblique),
                plane([-h, -door - side / 2.0, 0.0], [1.0, 0.0, 0.0], [side, 6.0], 1.0, oblique),
            ],
        )
    }
}
