//! Spinning-LiDAR geometry: spherical ray generation, intra-scan motion
//! compensation, patching and world-to-unit-cube scaling.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{invalid, Error, Result};
use crate::field::RangeSample;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorIntrinsics {
    /// Beam elevations in radians, strictly increasing within (−π/2, π/2).
    pub elevation_angles: Vec<f64>,
    /// Samples per revolution.
    pub azimuth_count: usize,
    pub s_max: f64,
    /// Seconds per revolution.
    pub scan_period: f64,
}

impl SensorIntrinsics {
    pub fn new(
        elevation_angles: Vec<f64>,
        azimuth_count: usize,
        s_max: f64,
        scan_period: f64,
    ) -> Result<Self> {
        let intrinsics = Self {
            elevation_angles,
            azimuth_count,
            s_max,
            scan_period,
        };
        intrinsics.validate()?;
        Ok(intrinsics)
    }

    pub fn validate(&self) -> Result<()> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if self.elevation_angles.is_empty() {
            return Err(invalid("sensor needs at least one beam"));
        }
        if self
            .elevation_angles
            .iter()
            .any(|e| !(e.abs() < half_pi))
        {
            return Err(invalid("beam elevations must lie in (-pi/2, pi/2)"));
        }
        if self.elevation_angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("beam elevations must be strictly increasing"));
        }
        if self.azimuth_count == 0 {
            return Err(invalid("azimuth_count must be at least 1"));
        }
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(invalid("s_max must be positive"));
        }
        if !(self.scan_period > 0.0 && self.scan_period.is_finite()) {
            return Err(invalid("scan_period must be positive"));
        }
        Ok(())
    }

    pub fn beams(&self) -> usize {
        self.elevation_angles.len()
    }

    pub fn samples_per_scan(&self) -> usize {
        self.beams() * self.azimuth_count
    }

    pub fn azimuth_angle(&self, azimuth_idx: usize) -> f64 {
        2.0 * std::f64::consts::PI * azimuth_idx as f64 / self.azimuth_count as f64
    }

    /// Time since scan start at which azimuth step `a` fires.
    pub fn time_offset(&self, azimuth_idx: usize) -> f64 {
        azimuth_idx as f64 / self.azimuth_count as f64 * self.scan_period
    }
}

/// Rigid sensor pose at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub timestamp: f64,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, timestamp: f64) -> Result<Self> {
        let rtr = rotation.transpose() * rotation;
        if (rtr - Matrix3::identity()).abs().max() > ORTHONORMAL_TOL
            || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL
        {
            return Err(invalid("pose rotation is not a proper orthonormal matrix"));
        }
        Ok(Self {
            rotation,
            translation,
            timestamp,
        })
    }

    pub fn identity(timestamp: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            timestamp,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>, timestamp: f64) -> Self {
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
            timestamp,
        }
    }

    /// Pose at position `translation` yawed by `yaw` radians about +z.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>, timestamp: f64) -> Self {
        Self::from_quaternion(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation,
            timestamp,
        )
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn with_timestamp(&self, timestamp: f64) -> Self {
        Self {
            timestamp,
            ..self.clone()
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Constant-velocity pose between `start` and `end` at absolute time `t`:
/// linear in translation, spherical-linear in rotation.
pub fn interpolate_pose(start: &Pose, end: &Pose, t: f64) -> Pose {
    let span = end.timestamp - start.timestamp;
    let f = if span > 0.0 {
        (t - start.timestamp) / span
    } else {
        0.0
    };
    let translation = if start.translation == end.translation {
        start.translation
    } else {
        start.translation + (end.translation - start.translation) * f
    };
    let rotation = if start.rotation == end.rotation {
        start.rotation
    } else {
        let q = start.quaternion().slerp(&end.quaternion(), f);
        *q.to_rotation_matrix().matrix()
    };
    Pose {
        rotation,
        translation,
        timestamp: t,
    }
}

/// One revolution of measurements, indexed `[beam][azimuth]` (beam-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame {
    pub intrinsics: SensorIntrinsics,
    pub start: Pose,
    pub end: Pose,
    pub ranges: Vec<RangeSample>,
}

impl ScanFrame {
    pub fn new(
        intrinsics: SensorIntrinsics,
        start: Pose,
        end: Pose,
        ranges: Vec<RangeSample>,
    ) -> Result<Self> {
        if ranges.len() != intrinsics.samples_per_scan() {
            return Err(Error::InvalidFrame(format!(
                "{} measurements for a {}x{} scan",
                ranges.len(),
                intrinsics.beams(),
                intrinsics.azimuth_count
            )));
        }
        Ok(Self {
            intrinsics,
            start,
            end,
            ranges,
        })
    }

    pub fn index(&self, beam: usize, azimuth: usize) -> usize {
        beam * self.intrinsics.azimuth_count + azimuth
    }

    pub fn range(&self, beam: usize, azimuth: usize) -> RangeSample {
        self.ranges[self.index(beam, azimuth)]
    }
}

/// World-frame geometry of a single emitted pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct RayGeometry {
    pub beam: usize,
    pub azimuth: usize,
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub t_offset: f64,
}

/// Sensor-frame unit direction for elevation `e` and azimuth `θ`.
pub fn sensor_direction(elevation: f64, azimuth: f64) -> Vector3<f64> {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vector3::new(ce * ca, ce * sa, se)
}

/// Pose at the firing time of every azimuth step.
pub fn motion_compensate(frame: &ScanFrame) -> Result<Vec<Pose>> {
    sample_poses(&frame.intrinsics, &frame.start, &frame.end)
}

fn sample_poses(intrinsics: &SensorIntrinsics, start: &Pose, end: &Pose) -> Result<Vec<Pose>> {
    if !(end.timestamp > start.timestamp) {
        return Err(Error::InvalidFrame(format!(
            "end timestamp {} is not after start {}",
            end.timestamp, start.timestamp
        )));
    }
    Ok((0..intrinsics.azimuth_count)
        .map(|a| interpolate_pose(start, end, start.timestamp + intrinsics.time_offset(a)))
        .collect())
}

/// World-frame rays for every `(beam, azimuth)` pair of a scan whose pose
/// moves from `start` to `end`, in beam-major order.
pub fn ray_directions(intrinsics: &SensorIntrinsics, start: &Pose, end: &Pose) -> Result<Vec<RayGeometry>> {
    let poses = sample_poses(intrinsics, start, end)?;
    let mut rays = Vec::with_capacity(intrinsics.samples_per_scan());
    for (beam, &elevation) in intrinsics.elevation_angles.iter().enumerate() {
        for (azimuth, pose) in poses.iter().enumerate() {
            let local = sensor_direction(elevation, intrinsics.azimuth_angle(azimuth));
            let direction = (pose.rotation * local).normalize();
            rays.push(RayGeometry {
                beam,
                azimuth,
                origin: pose.translation,
                direction,
                t_offset: intrinsics.time_offset(azimuth),
            });
        }
    }
    Ok(rays)
}

/// Groups a scan's rays into contiguous azimuth intervals. The last patch
/// is smaller when `patches` does not divide the azimuth count.
pub fn patch_scan(rays: &[RayGeometry], azimuth_count: usize, patches: usize) -> Vec<Vec<RayGeometry>> {
    let patches = patches.clamp(1, azimuth_count.max(1));
    let width = azimuth_count.div_ceil(patches);
    let n = azimuth_count.div_ceil(width);
    let mut out = vec![Vec::new(); n];
    for ray in rays {
        out[ray.azimuth / width].push(ray.clone());
    }
    out
}

/// Uniform scale plus translation taking a box into `[-1, 1]³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCube {
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl UnitCube {
    pub fn from_bounds(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        let extent = max - min;
        if extent.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(invalid("scene bounds must have positive extent"));
        }
        Ok(Self {
            center: (min + max) * 0.5,
            scale: 2.0 / extent.max(),
        })
    }

    /// Smallest cube map containing every sensor origin padded by `s_max`,
    /// so that every sample along every ray lands inside the cube.
    pub fn enclosing_rays<'a>(origins: impl IntoIterator<Item = &'a Vector3<f64>>, s_max: f64) -> Result<Self> {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for o in origins {
            min = min.inf(o);
            max = max.sup(o);
        }
        if !min.x.is_finite() {
            return Err(invalid("no sensor origins to bound"));
        }
        let pad = Vector3::repeat(s_max * (1.0 + 1e-6));
        Self::from_bounds(min - pad, max + pad)
    }

    pub fn to_unit(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p - self.center) * self.scale
    }

    pub fn from_unit(&self, u: &Vector3<f64>) -> Vector3<f64> {
        u / self.scale + self.center
    }
}

/// Maps `points` into the unit cube defined by `bounds`, returning the map
/// for inverting rendered output.
pub fn to_unit_cube(points: &[Vector3<f64>], min: Vector3<f64>, max: Vector3<f64>) -> Result<(Vec<Vector3<f64>>, UnitCube)> {
    let cube = UnitCube::from_bounds(min, max)?;
    Ok((points.iter().map(|p| cube.to_unit(p)).collect(), cube))
}
