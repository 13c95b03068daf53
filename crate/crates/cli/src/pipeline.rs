//! Dataset generation, training, rendering and evaluation driven by a
//! [`RunConfig`]. Every random choice derives from the config seed.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use plink_core::dataset::{group_scans, holdout_split, rays, RayRecord};
use plink_core::eval::{metrics, MetricsReport, PointCloud};
use plink_core::field::{RangeSample, Ray};
use plink_core::losses::LossBreakdown;
use plink_core::net::{Architecture, EncodingConfig, FieldModel};
use plink_core::render::{render_rays, to_points, RenderMode};
use plink_core::sampler::{FieldModels, Objective, Trainer};
use plink_core::sensor::{ray_directions, Pose, ScanFrame, UnitCube};
use plink_core::simscene::{canonical, generate_dataset, SceneSpec};
use plink_core::streams::stream_seed;
use plink_core::{checkpoint, io, Error, Result};

use crate::config::RunConfig;

const TAG_TRAIN_DATA: u64 = 1;
const TAG_TRUTH_DATA: u64 = 2;
const TAG_INIT: u64 = 3;
const TAG_RENDER: u64 = 4;

pub fn load_scene(cfg: &RunConfig) -> Result<SceneSpec> {
    match canonical::by_name(&cfg.scene) {
        Some(scene) => Ok(scene),
        None if Path::new(&cfg.scene).is_file() => SceneSpec::load(Path::new(&cfg.scene)),
        None => Err(Error::InvalidInput(format!(
            "{:?} is neither a built-in scene ({}) nor a scene file",
            cfg.scene,
            canonical::NAMES.join(", ")
        ))),
    }
}

pub fn station_pose(station: &[f64; 4], timestamp: f64) -> Pose {
    Pose::from_yaw(
        station[3].to_radians(),
        Vector3::new(station[0], station[1], station[2]),
        timestamp,
    )
}

/// Waypoints for `scans` back-to-back static scans.
pub fn static_path(station: &[f64; 4], scans: usize, period: f64) -> Vec<Pose> {
    (0..=scans).map(|k| station_pose(station, k as f64 * period)).collect()
}

/// Training scans: repeated static scans at every station, or one pass
/// along the waypoint file when one is configured.
pub fn training_frames(cfg: &RunConfig, scene: &SceneSpec) -> Result<Vec<ScanFrame>> {
    let intrinsics = cfg.intrinsics()?;
    if let Some(path) = &cfg.path_file {
        let waypoints = io::read_poses(path)?;
        return generate_dataset(scene, &waypoints, &intrinsics, stream_seed(&[cfg.seed, TAG_TRAIN_DATA]));
    }
    let mut frames = Vec::new();
    for (i, st) in cfg.stations.iter().enumerate() {
        let path = static_path(st, cfg.scans_per_station, cfg.scan_period);
        let seed = stream_seed(&[cfg.seed, TAG_TRAIN_DATA, i as u64]);
        frames.extend(generate_dataset(scene, &path, &intrinsics, seed)?);
    }
    Ok(frames)
}

/// Fresh scans at every evaluation station, independent of the training
/// draws.
pub fn truth_frames(cfg: &RunConfig, scene: &SceneSpec) -> Result<Vec<Vec<ScanFrame>>> {
    let intrinsics = cfg.intrinsics()?;
    cfg.evaluation_stations()
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let path = static_path(st, cfg.eval_scans.max(1), cfg.scan_period);
            generate_dataset(scene, &path, &intrinsics, stream_seed(&[cfg.seed, TAG_TRUTH_DATA, i as u64]))
        })
        .collect()
}

/// World points of every return in `frames`.
pub fn frame_points(frames: &[ScanFrame]) -> Result<Vec<Vector3<f64>>> {
    let mut out = Vec::new();
    for f in frames {
        let geometry = ray_directions(&f.intrinsics, &f.start, &f.end)?;
        for (g, r) in geometry.iter().zip(&f.ranges) {
            if let RangeSample::Range(d) = r {
                out.push(g.origin + g.direction * *d);
            }
        }
    }
    Ok(out)
}

/// Measurement-free rays of one scan at `station`.
pub fn station_rays(cfg: &RunConfig, station: &[f64; 4]) -> Result<Vec<Ray>> {
    let intrinsics = cfg.intrinsics()?;
    let start = station_pose(station, 0.0);
    let end = station_pose(station, cfg.scan_period);
    Ok(ray_directions(&intrinsics, &start, &end)?
        .into_iter()
        .map(|g| Ray {
            origin: g.origin,
            direction: g.direction,
            s_max: cfg.s_max,
            measurements: Vec::new(),
        })
        .collect())
}

/// Training and held-out ray records for `cfg`.
pub fn dataset(cfg: &RunConfig, frames: &[ScanFrame]) -> Result<(Vec<RayRecord>, Vec<RayRecord>)> {
    let records = group_scans(frames)?;
    if cfg.holdout > 0.0 {
        Ok(holdout_split(&records, cfg.holdout, cfg.seed))
    } else {
        Ok((records, Vec::new()))
    }
}

pub fn architectures(cfg: &RunConfig, objective: Objective) -> Result<(Architecture, Architecture)> {
    let encoding = EncodingConfig {
        position_levels: cfg.position_levels,
        direction_levels: (cfg.direction_levels > 0).then_some(cfg.direction_levels),
    };
    let activation = cfg.activation()?;
    let coarse = Architecture {
        encoding,
        hidden: cfg.coarse_hidden.clone(),
        activation,
        drop_head: false,
    };
    let fine = Architecture {
        encoding,
        hidden: cfg.hidden.clone(),
        activation,
        drop_head: objective == Objective::Probabilistic,
    };
    Ok((coarse, fine))
}

/// Freshly initialised networks whose unit cube covers every station and
/// training origin out to `s_max`.
pub fn new_models(cfg: &RunConfig, objective: Objective, training: &[Ray]) -> Result<FieldModels> {
    let (coarse, fine) = architectures(cfg, objective)?;
    let stations: Vec<Vector3<f64>> = cfg
        .stations
        .iter()
        .chain(cfg.evaluation_stations())
        .map(|s| Vector3::new(s[0], s[1], s[2]))
        .collect();
    let origins = training.iter().map(|r| &r.origin).chain(&stations);
    Ok(FieldModels {
        coarse: FieldModel::new(coarse, stream_seed(&[cfg.seed, TAG_INIT, 0])),
        fine: FieldModel::new(fine, stream_seed(&[cfg.seed, TAG_INIT, 1])),
        frame: UnitCube::enclosing_rays(origins, cfg.s_max)?,
        objective,
        n_bins: cfg.bins,
        n_fine: cfg.fine_samples,
    })
}

/// Runs the configured number of epochs, reporting each one to `on_epoch`.
/// On divergence the trainer still holds the last finite models.
pub fn run_epochs(
    trainer: &mut Trainer,
    training: &[Ray],
    mut on_epoch: impl FnMut(usize, &LossBreakdown),
) -> Result<Vec<LossBreakdown>> {
    let mut curve = Vec::with_capacity(trainer.config.epochs);
    for epoch in 0..trainer.config.epochs {
        let losses = trainer.train_epoch(training)?;
        on_epoch(epoch, &losses);
        curve.push(losses);
    }
    Ok(curve)
}

/// Trains a fresh model; convenience wrapper for tests and `compare`.
pub fn train(cfg: &RunConfig, objective: Objective, training: &[Ray]) -> Result<(FieldModels, Vec<LossBreakdown>)> {
    let models = new_models(cfg, objective, training)?;
    let mut trainer = Trainer::new(models, cfg.train_config())?;
    let curve = run_epochs(&mut trainer, training, |_, _| {})?;
    Ok((trainer.models, curve))
}

pub fn loss_curve_csv(curve: &[LossBreakdown]) -> String {
    let mut out = String::from("epoch,l_c,l_drop,l_coarse,l_fine\n");
    for (e, l) in curve.iter().enumerate() {
        writeln!(out, "{e},{},{},{},{}", l.l_c, l.l_drop, l.l_coarse, l.l_fine).expect("writing to a String");
    }
    out
}

/// Copy of `models` drawing `render_fine_samples` fine points per ray.
pub fn render_models(cfg: &RunConfig, models: &FieldModels) -> FieldModels {
    FieldModels {
        n_fine: cfg.render_fine_samples,
        ..models.clone()
    }
}

/// Rendered world points for one scan at evaluation station `index`.
pub fn render_station(cfg: &RunConfig, models: &FieldModels, index: usize, mode: RenderMode) -> Result<Vec<Vector3<f64>>> {
    let models = &render_models(cfg, models);
    let station = cfg
        .evaluation_stations()
        .get(index)
        .ok_or_else(|| Error::InvalidInput(format!("no station {index}")))?;
    let rays = station_rays(cfg, station)?;
    let samples = render_rays(models, &rays, mode, stream_seed(&[cfg.seed, TAG_RENDER, index as u64]))?;
    Ok(to_points(&rays, &samples))
}

pub fn method_name(objective: Objective) -> &'static str {
    match objective {
        Objective::Probabilistic => "probabilistic",
        Objective::Baseline => "baseline",
    }
}

/// One metrics row of a comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: &'static str,
    /// `all` for the aggregated clouds, `per_scan` for the mean over scans.
    pub scope: &'static str,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<ReportRow>,
}

impl CompareReport {
    pub fn get(&self, method: &str, scope: &str) -> Option<&MetricsReport> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.scope == scope)
            .map(|r| &r.metrics)
    }

    pub fn csv(&self) -> String {
        let mut out = format!("method,scope,{}\n", MetricsReport::CSV_HEADER);
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.method, r.scope, r.metrics.csv_row()).expect("writing to a String");
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:<9} {:>14} {:>12} {:>14} {:>10}\n",
            "method", "scope", "completion_cm", "accuracy_cm", "chamfer_l1_cm", "f_score_%"
        );
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(
                out,
                "{:<14} {:<9} {:>14.3} {:>12.3} {:>14.3} {:>10.2}",
                r.method, r.scope, m.completion_cm, m.accuracy_cm, m.chamfer_l1_cm, m.f_score_pct
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Metrics for `models` against the truth scans of every station: once on
/// the aggregated clouds and once averaged over individual scans.
pub fn evaluate_models(
    cfg: &RunConfig,
    models: &FieldModels,
    truth: &[Vec<ScanFrame>],
    mode: RenderMode,
) -> Result<(Vec<ReportRow>, Vec<Vec<Vector3<f64>>>)> {
    let method = method_name(models.objective);
    let mut rendered_all = Vec::new();
    let mut truth_all = Vec::new();
    let mut per_scan = Vec::new();
    let mut clouds = Vec::new();
    for (i, frames) in truth.iter().enumerate() {
        let rendered = PointCloud::new(render_station(cfg, models, i, mode)?)?;
        for f in frames {
            let gt = PointCloud::new(frame_points(std::slice::from_ref(f))?)?;
            per_scan.push(metrics(&gt, &rendered, cfg.threshold_cm)?);
        }
        truth_all.extend(frame_points(frames)?);
        rendered_all.extend(rendered.points.iter().copied());
        clouds.push(rendered.points);
    }
    let all = metrics(&PointCloud::new(truth_all)?, &PointCloud::new(rendered_all)?, cfg.threshold_cm)?;
    Ok((
        vec![
            ReportRow {
                method,
                scope: "all",
                metrics: all,
            },
            ReportRow {
                method,
                scope: "per_scan",
                metrics: MetricsReport::mean(&per_scan)?,
            },
        ],
        clouds,
    ))
}

/// Trains both methods, renders every station and writes checkpoints, loss
/// curves, clouds and `report.csv` into `cfg.output_dir`.
pub fn compare(cfg: &RunConfig, mut log: impl FnMut(&str)) -> Result<CompareReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let scene = load_scene(cfg)?;
    let frames = training_frames(cfg, &scene)?;
    let (train_set, _) = dataset(cfg, &frames)?;
    let training = rays(&train_set);
    let truth = truth_frames(cfg, &scene)?;
    let mode = cfg.render_mode()?;
    for (i, frames) in truth.iter().enumerate() {
        io::write_ply(&out.join(format!("truth_station{i}.ply")), &frame_points(frames)?)?;
    }
    let mut rows = Vec::new();
    for objective in [Objective::Probabilistic, Objective::Baseline] {
        let name = method_name(objective);
        log(&format!("training {name} model on {} rays", training.len()));
        let models = new_models(cfg, objective, &training)?;
        let mut trainer = Trainer::new(models, cfg.train_config())?;
        let curve = run_epochs(&mut trainer, &training, |e, l| {
            log(&format!("{name} epoch {e}: l_fine {:.6} l_coarse {:.6}", l.l_fine, l.l_coarse))
        });
        let curve = match curve {
            Ok(c) => c,
            Err(e) => {
                checkpoint::save(&out.join(format!("{name}_diverged.bin")), &trainer.models)?;
                return Err(e);
            }
        };
        std::fs::write(out.join(format!("loss_{name}.csv")), loss_curve_csv(&curve))?;
        checkpoint::save(&out.join(format!("{name}.bin")), &trainer.models)?;
        let (method_rows, clouds) = evaluate_models(cfg, &trainer.models, &truth, mode)?;
        for (i, cloud) in clouds.iter().enumerate() {
            io::write_ply(&out.join(format!("render_{name}_station{i}.ply")), cloud)?;
        }
        rows.extend(method_rows);
    }
    let report = CompareReport { rows };
    std::fs::write(out.join("report.csv"), report.csv())?;
    Ok(report)
}
