//! File formats: point clouds (ASCII PLY, `x,y,z` CSV), scan datasets and
//! sensor paths.
//!
//! A dataset directory holds `sensor.toml` with the intrinsics and, for each
//! scan `k`, `scan_k.csv` (one row per `(beam, azimuth)` sample) and
//! `scan_k_poses.csv` (start and end pose). Floats are written in shortest
//! round-trip form, so loading a saved dataset reproduces it exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RangeSample;
use crate::sensor::{Pose, ScanFrame, SensorIntrinsics};

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn num(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, format!("line {line}: {field:?} is not a number")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn ply_string(points: &[Vector3<f64>]) -> String {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    );
    for p in points {
        writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("writing to a String");
    }
    out
}

pub fn write_ply(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    write_text(path, &ply_string(points))
}

pub fn read_ply(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(parse_err(path, "missing 'ply' magic line"));
    }
    let mut count = None;
    for (i, line) in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if line.starts_with("format") && line != "format ascii 1.0" {
            return Err(parse_err(path, format!("line {}: only ascii 1.0 is supported", i + 1)));
        }
        if let Some(n) = line.strip_prefix("element vertex ") {
            count = Some(
                n.trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(path, format!("line {}: bad vertex count", i + 1)))?,
            );
        }
    }
    let count = count.ok_or_else(|| parse_err(path, "no vertex element in header"))?;
    let mut points = Vec::with_capacity(count);
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()).take(count) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 3 {
            return Err(parse_err(path, format!("line {}: expected x y z", i + 1)));
        }
        points.push(Vector3::new(num(path, i + 1, f[0])?, num(path, i + 1, f[1])?, num(path, i + 1, f[2])?));
    }
    if points.len() != count {
        return Err(parse_err(path, format!("header promises {count} vertices, found {}", points.len())));
    }
    Ok(points)
}

pub fn write_xyz_csv(path: &Path, points: &[Vector3<f64>]) -> Result<()> {
    let mut out = String::from("x,y,z\n");
    for p in points {
        writeln!(out, "{},{},{}", p.x, p.y, p.z).expect("writing to a String");
    }
    write_text(path, &out)
}

/// Reads comma- or whitespace-separated `x y z` rows; a non-numeric first
/// row is taken as a header.
pub fn read_xyz_csv(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if f.is_empty() || (i == 0 && f[0].parse::<f64>().is_err()) {
            continue;
        }
        if f.len() != 3 {
            return Err(parse_err(path, format!("line {}: expected 3 columns", i + 1)));
        }
        points.push(Vector3::new(num(path, i + 1, f[0])?, num(path, i + 1, f[1])?, num(path, i + 1, f[2])?));
    }
    Ok(points)
}

/// Reads a cloud by extension: `.ply` or anything else as CSV.
pub fn read_cloud(path: &Path) -> Result<Vec<Vector3<f64>>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => read_ply(path),
        _ => read_xyz_csv(path),
    }
}

pub const POSE_HEADER: &str = "t_s,tx,ty,tz,qw,qx,qy,qz";

pub fn poses_string(poses: &[Pose]) -> String {
    let mut out = format!("{POSE_HEADER}\n");
    for p in poses {
        let q = p.quaternion();
        let t = p.translation;
        writeln!(out, "{},{},{},{},{},{},{},{}", p.timestamp, t.x, t.y, t.z, q.w, q.i, q.j, q.k)
            .expect("writing to a String");
    }
    out
}

pub fn write_poses(path: &Path, poses: &[Pose]) -> Result<()> {
    write_text(path, &poses_string(poses))
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut poses = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        if rec.len() != 8 {
            return Err(parse_err(path, format!("row {}: expected {POSE_HEADER}", i + 1)));
        }
        let v: Vec<f64> = rec.iter().map(|f| num(path, i + 2, f)).collect::<Result<_>>()?;
        let q = Quaternion::new(v[4], v[5], v[6], v[7]);
        if !(q.norm() > 0.5) {
            return Err(parse_err(path, format!("row {}: quaternion is not unit norm", i + 1)));
        }
        poses.push(Pose::from_quaternion(
            UnitQuaternion::from_quaternion(q),
            Vector3::new(v[1], v[2], v[3]),
            v[0],
        ));
    }
    Ok(poses)
}

pub const SCAN_HEADER: &str = "beam_idx,azimuth_idx,range_m,drop_flag,t_offset_s";

pub fn scan_string(frame: &ScanFrame) -> String {
    let intr = &frame.intrinsics;
    let mut out = format!("{SCAN_HEADER}\n");
    for beam in 0..intr.beams() {
        for az in 0..intr.azimuth_count {
            let t = intr.time_offset(az);
            match frame.range(beam, az) {
                RangeSample::Range(r) => writeln!(out, "{beam},{az},{r},1,{t}"),
                RangeSample::Drop => writeln!(out, "{beam},{az},,0,{t}"),
            }
            .expect("writing to a String");
        }
    }
    out
}

/// Reads a scan file into a frame. Rows may come in any order but must
/// cover every `(beam, azimuth)` pair exactly once.
pub fn read_scan(path: &Path, intrinsics: &SensorIntrinsics, start: Pose, end: Pose) -> Result<ScanFrame> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let n = intrinsics.samples_per_scan();
    let mut ranges: Vec<Option<RangeSample>> = vec![None; n];
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        if rec.len() != 5 {
            return Err(parse_err(path, format!("line {row}: expected {SCAN_HEADER}")));
        }
        let idx = |f: &str| {
            f.parse::<usize>()
                .map_err(|_| parse_err(path, format!("line {row}: bad index {f:?}")))
        };
        let (beam, az) = (idx(&rec[0])?, idx(&rec[1])?);
        if beam >= intrinsics.beams() || az >= intrinsics.azimuth_count {
            return Err(parse_err(path, format!("line {row}: sample ({beam}, {az}) outside the sensor grid")));
        }
        let sample = match &rec[3] {
            "1" => RangeSample::Range(num(path, row, &rec[2])?),
            "0" => RangeSample::Drop,
            f => return Err(parse_err(path, format!("line {row}: drop_flag {f:?} must be 0 or 1"))),
        };
        let slot = &mut ranges[beam * intrinsics.azimuth_count + az];
        if slot.is_some() {
            return Err(parse_err(path, format!("line {row}: duplicate sample ({beam}, {az})")));
        }
        *slot = Some(sample);
    }
    let ranges = ranges
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| parse_err(path, "scan does not cover every beam and azimuth"))?;
    ScanFrame::new(intrinsics.clone(), start, end, ranges)
}

/// On-disk form of [`SensorIntrinsics`]. Angles are stored in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFile {
    pub elevation_angles: Vec<f64>,
    pub azimuth_count: usize,
    pub s_max: f64,
    pub scan_period: f64,
}

impl From<&SensorIntrinsics> for SensorFile {
    fn from(s: &SensorIntrinsics) -> Self {
        Self {
            elevation_angles: s.elevation_angles.clone(),
            azimuth_count: s.azimuth_count,
            s_max: s.s_max,
            scan_period: s.scan_period,
        }
    }
}

impl SensorFile {
    pub fn intrinsics(&self) -> Result<SensorIntrinsics> {
        SensorIntrinsics::new(self.elevation_angles.clone(), self.azimuth_count, self.s_max, self.scan_period)
    }
}

pub fn write_intrinsics(path: &Path, intrinsics: &SensorIntrinsics) -> Result<()> {
    let text = toml::to_string(&SensorFile::from(intrinsics)).expect("sensor file serializes");
    write_text(path, &text)
}

pub fn read_intrinsics(path: &Path) -> Result<SensorIntrinsics> {
    let file: SensorFile =
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| parse_err(path, e.to_string()))?;
    file.intrinsics()
}

fn scan_paths(dir: &Path, k: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("scan_{k:04}.csv")), dir.join(format!("scan_{k:04}_poses.csv")))
}

pub fn save_dataset(dir: &Path, frames: &[ScanFrame]) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| crate::error::invalid("no scans to save"))?;
    fs::create_dir_all(dir)?;
    write_intrinsics(&dir.join("sensor.toml"), &first.intrinsics)?;
    for (k, frame) in frames.iter().enumerate() {
        let (scan, poses) = scan_paths(dir, k);
        write_text(&scan, &scan_string(frame))?;
        write_poses(&poses, &[frame.start.clone(), frame.end.clone()])?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<ScanFrame>> {
    let intrinsics = read_intrinsics(&dir.join("sensor.toml"))?;
    let mut frames = Vec::new();
    for k in 0.. {
        let (scan, poses) = scan_paths(dir, k);
        if !scan.exists() {
            break;
        }
        let p = read_poses(&poses)?;
        if p.len() != 2 {
            return Err(parse_err(&poses, "expected a start and an end pose"));
        }
        frames.push(read_scan(&scan, &intrinsics, p[0].clone(), p[1].clone())?);
    }
    if frames.is_empty() {
        return Err(parse_err(dir, "dataset directory holds no scans"));
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simscene::{canonical, generate_dataset};

    #[test]
    fn ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let pts = vec![Vector3::new(0.1, -2.5, 3.0), Vector3::new(1e-3, 7.0, -0.25)];
        write_ply(&path, &pts).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 2\n"));
        assert_eq!(read_ply(&path).unwrap(), pts);
        assert_eq!(read_cloud(&path).unwrap(), pts);
    }

    #[test]
    fn csv_round_trip_and_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let pts = vec![Vector3::new(0.1, -2.5, 3.0)];
        write_xyz_csv(&path, &pts).unwrap();
        assert_eq!(read_xyz_csv(&path).unwrap(), pts);
        fs::write(&path, "0.1 -2.5 3\n").unwrap();
        assert_eq!(read_xyz_csv(&path).unwrap(), pts);
        fs::write(&path, "0.1 -2.5\n").unwrap();
        assert!(read_xyz_csv(&path).is_err());
    }

    #[test]
    fn truncated_ply_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        fs::write(&path, "ply\nformat ascii 1.0\nelement vertex 3\nend_header\n1 2 3\n").unwrap();
        assert!(read_ply(&path).is_err());
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let intr = SensorIntrinsics::new(vec![-0.1, 0.0, 0.1], 16, 20.0, 0.1).unwrap();
        let path: Vec<Pose> = (0..3)
            .map(|k| Pose::from_yaw(0.3 * k as f64, Vector3::new(0.5 * k as f64, 0.0, 0.0), 0.1 * k as f64))
            .collect();
        let frames = generate_dataset(&canonical::two_surface(), &path, &intr, 5).unwrap();
        save_dataset(dir.path(), &frames).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), frames.len());
        for (a, b) in frames.iter().zip(&back) {
            assert_eq!(a.ranges, b.ranges);
            assert_eq!(a.intrinsics, b.intrinsics);
            assert!((a.start.rotation - b.start.rotation).abs().max() < 1e-12);
            assert_eq!(a.end.translation, b.end.translation);
        }
        let scan = fs::read_to_string(dir.path().join("scan_0000.csv")).unwrap();
        assert!(scan.starts_with(SCAN_HEADER));
    }

    #[test]
    fn scan_rows_must_cover_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let intr = SensorIntrinsics::new(vec![0.0], 2, 10.0, 0.1).unwrap();
        fs::write(&path, format!("{SCAN_HEADER}\n0,0,5.0,1,0\n")).unwrap();
        let err = read_scan(&path, &intr, Pose::identity(0.0), Pose::identity(0.1));
        assert!(err.is_err());
        fs::write(&path, format!("{SCAN_HEADER}\n0,1,,0,0.05\n0,0,5.0,1,0\n")).unwrap();
        let f = read_scan(&path, &intr, Pose::identity(0.0), Pose::identity(0.1)).unwrap();
        assert_eq!(f.ranges, vec![RangeSample::Range(5.0), RangeSample::Drop]);
    }
}
