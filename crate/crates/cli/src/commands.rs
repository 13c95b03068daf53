//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use plink_core::eval::{metrics, MetricsReport, PointCloud};
use plink_core::render::{render_rays, to_points, RenderMode};
use plink_core::sampler::{Objective, Trainer};
use plink_core::streams::stream_seed;
use plink_core::{checkpoint, io, Error, Result};

use crate::config::RunConfig;
use crate::pipeline::{
    compare, dataset, load_scene, loss_curve_csv, method_name, new_models, render_models, render_station, training_frames,
};

pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
const CHECKPOINT_EVERY: usize = 5;

#[derive(Debug, Parser)]
#[command(name = "plink", version, about = "Probabilistic LiDAR range fields")]
pub struct Cli {
    /// Worker threads for batch parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate repeated scans of a scene and write them to disk.
    Gen(RunArgs),
    /// Train the probabilistic model.
    Train(TrainArgs),
    /// Train the depth-regression baseline.
    Baseline(TrainArgs),
    /// Render point clouds from a checkpoint.
    Render(RenderArgs),
    /// Compare two point clouds.
    Eval(EvalArgs),
    /// Train both methods, render, evaluate and report side by side.
    Compare(RunArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// Run configuration file (flat TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub fine_samples: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Dataset directory written by `gen`; simulated from the config when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct RenderArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Pose CSV (`t_s,tx,ty,tz,qw,qx,qy,qz`), one scan per row; the config
    /// stations are used when absent.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// `stochastic[:N]`, `confidence:L`, `first[:T]` or `strongest`.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub synth: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    pub threshold_cm: f64,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Config file, then `PLINK_SEED`, then command-line flags.
pub fn resolve_config(args: &RunArgs, env_seed: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = env_seed {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("PLINK_SEED={s:?} is not an unsigned integer")))?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.scene {
        cfg.scene = v.clone();
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.bins {
        cfg.bins = v;
    }
    if let Some(v) = args.fine_samples {
        cfg.fine_samples = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = &args.out {
        cfg.output_dir = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let scene = load_scene(cfg)?;
    let frames = training_frames(cfg, &scene)?;
    let dir = cfg.output_dir.join("dataset");
    io::save_dataset(&dir, &frames)?;
    std::fs::write(cfg.output_dir.join("scene.toml"), scene.to_toml())?;
    std::fs::write(cfg.output_dir.join("run.toml"), cfg.to_toml())?;
    println!("wrote {} scans to {}", frames.len(), dir.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, data: Option<&Path>, objective: Objective) -> Result<()> {
    let frames = match data {
        Some(dir) => io::load_dataset(dir)?,
        None => training_frames(cfg, &load_scene(cfg)?)?,
    };
    let (train_set, _) = dataset(cfg, &frames)?;
    let training = plink_core::dataset::rays(&train_set);
    let name = method_name(objective);
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let mut trainer = Trainer::new(new_models(cfg, objective, &training)?, cfg.train_config())?;
    let ckpt = out.join(format!("{name}.bin"));
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let l = match trainer.train_epoch(&training) {
            Ok(l) => l,
            Err(e) => {
                checkpoint::save(&out.join(format!("{name}_diverged.bin")), &trainer.models)?;
                return Err(e);
            }
        };
        log(&format!(
            "epoch {epoch}: l_c {:.6} l_drop {:.6} l_fine {:.6} l_coarse {:.6}",
            l.l_c, l.l_drop, l.l_fine, l.l_coarse
        ));
        curve.push(l);
        if (epoch + 1) % CHECKPOINT_EVERY == 0 {
            checkpoint::save(&ckpt, &trainer.models)?;
        }
    }
    std::fs::write(out.join(format!("loss_{name}.csv")), loss_curve_csv(&curve))?;
    checkpoint::save(&ckpt, &trainer.models)?;
    println!("trained {name} model on {} rays for {} epochs", training.len(), curve.len());
    Ok(())
}

fn cmd_render(cfg: &RunConfig, args: &RenderArgs) -> Result<()> {
    let models = render_models(cfg, &checkpoint::load(&args.checkpoint)?);
    let mode = match &args.mode {
        Some(m) => RenderMode::parse(m)?,
        None => cfg.render_mode()?,
    };
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    match &args.poses {
        Some(path) => {
            let poses = io::read_poses(path)?;
            let intrinsics = cfg.intrinsics()?;
            for (i, pose) in poses.iter().enumerate() {
                let end = pose.with_timestamp(pose.timestamp + cfg.scan_period);
                let rays: Vec<_> = plink_core::sensor::ray_directions(&intrinsics, pose, &end)?
                    .into_iter()
                    .map(|g| plink_core::field::Ray {
                        origin: g.origin,
                        direction: g.direction,
                        s_max: cfg.s_max,
                        measurements: Vec::new(),
                    })
                    .collect();
                let samples = render_rays(&models, &rays, mode, stream_seed(&[cfg.seed, 5, i as u64]))?;
                let path = out.join(format!("render_pose{i}.ply"));
                io::write_ply(&path, &to_points(&rays, &samples))?;
                println!("wrote {}", path.display());
            }
        }
        None => {
            for i in 0..cfg.evaluation_stations().len() {
                let path = out.join(format!("render_station{i}.ply"));
                io::write_ply(&path, &render_station(cfg, &models, i, mode)?)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let gt = PointCloud::new(io::read_cloud(&args.gt)?)?;
    let synth = PointCloud::new(io::read_cloud(&args.synth)?)?;
    let m = metrics(&gt, &synth, args.threshold_cm)?;
    let csv = format!("{}\n{}\n", MetricsReport::CSV_HEADER, m.csv_row());
    if let Some(path) = &args.csv {
        std::fs::write(path, &csv)?;
    }
    println!("completion_cm  {:.4}", m.completion_cm);
    println!("accuracy_cm    {:.4}", m.accuracy_cm);
    println!("chamfer_l1_cm  {:.4}", m.chamfer_l1_cm);
    println!("f_score_%      {:.4}  (threshold {} cm)", m.f_score_pct, m.threshold_cm);
    Ok(())
}

fn cmd_compare(cfg: &RunConfig) -> Result<()> {
    let report = compare(cfg, log)?;
    print!("{}", report.table());
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::InvalidInput(_) | Error::Parse { .. } => EXIT_INVALID_CONFIG,
        _ => 1,
    }
}

pub fn execute(cli: Cli, env_seed: Option<&str>) -> Result<()> {
    if let Some(n) = cli.threads {
        // fails only if a pool already exists, which keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(&resolve_config(a, env_seed)?),
        Command::Train(a) => cmd_train(&resolve_config(&a.run, env_seed)?, a.data.as_deref(), Objective::Probabilistic),
        Command::Baseline(a) => cmd_train(&resolve_config(&a.run, env_seed)?, a.data.as_deref(), Objective::Baseline),
        Command::Render(a) => cmd_render(&resolve_config(&a.run, env_seed)?, a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(&resolve_config(a, env_seed)?),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run(args: impl IntoIterator<Item = String>, env_seed: Option<&str>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID_CONFIG } else { 0 };
        }
    };
    match execute(cli, env_seed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
