//! Run configuration: a flat TOML file of key/value pairs.
//!
//! Every key is optional and falls back to [`RunConfig::default`]. Relative
//! paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use plink_core::net::Activation;
use plink_core::render::RenderMode;
use plink_core::sampler::{TrainConfig, DEFAULT_BINS, DEFAULT_FINE_SAMPLES, DEFAULT_LR_FINAL_RATIO};
use plink_core::sensor::SensorIntrinsics;
use plink_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in scene name or path to a scene file.
    pub scene: String,
    /// Static sensor stations as `[x, y, z, yaw_deg]`.
    pub stations: Vec<[f64; 4]>,
    /// Stations rendered and scored against fresh truth scans; the training
    /// stations when empty.
    pub eval_stations: Vec<[f64; 4]>,
    /// Repeated scans recorded at every station.
    pub scans_per_station: usize,
    /// Optional waypoint file (pose CSV) for a moving sensor, replacing the
    /// stations for training data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_file: Option<PathBuf>,
    pub elevations_deg: Vec<f64>,
    pub azimuth_count: usize,
    pub s_max: f64,
    pub scan_period: f64,

    pub bins: usize,
    pub fine_samples: usize,
    pub hidden: Vec<usize>,
    pub coarse_hidden: Vec<usize>,
    /// `relu` or `silu`.
    pub activation: String,
    pub position_levels: usize,
    /// Frequency levels of the view direction; 0 disables the input.
    pub direction_levels: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` (exponential decay).
    pub lr_final_ratio: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub seed: u64,

    /// Fraction of rays held out from training.
    pub holdout: f64,
    /// Fresh ground-truth scans per station for evaluation.
    pub eval_scans: usize,
    pub threshold_cm: f64,
    /// `stochastic[:N]`, `confidence:L`, `first[:T]` or `strongest`.
    pub render_mode: String,
    /// Fine points drawn per ray when rendering.
    pub render_fine_samples: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: "two_surface".into(),
            stations: vec![[0.0, 0.0, 0.0, 0.0]],
            eval_stations: Vec::new(),
            scans_per_station: 32,
            path_file: None,
            elevations_deg: vec![-4.0, 0.0, 4.0],
            azimuth_count: 360,
            s_max: 12.0,
            scan_period: 0.1,
            bins: DEFAULT_BINS,
            fine_samples: DEFAULT_FINE_SAMPLES,
            hidden: vec![64, 64, 64],
            coarse_hidden: vec![32, 32],
            activation: "relu".into(),
            position_levels: 8,
            direction_levels: 2,
            lr: 5e-4,
            lr_final_ratio: DEFAULT_LR_FINAL_RATIO,
            epochs: 20,
            batch_size: 256,
            alpha: 0.999,
            seed: 0,
            holdout: 0.0,
            eval_scans: 4,
            threshold_cm: 20.0,
            render_mode: "stochastic:3".into(),
            render_fine_samples: 256,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if self.scene.ends_with(".toml") {
            self.scene = join(Path::new(&self.scene)).to_string_lossy().into_owned();
        }
        self.path_file = self.path_file.as_deref().map(join);
        self.output_dir = join(&self.output_dir);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.intrinsics()?;
        self.activation()?;
        self.render_mode()?;
        if self.stations.is_empty() {
            return Err(bad("at least one station is required"));
        }
        if self.scans_per_station == 0 {
            return Err(bad("scans_per_station must be positive"));
        }
        if self.bins < 2 || self.fine_samples == 0 || self.render_fine_samples == 0 {
            return Err(bad("need at least 2 bins and 1 fine sample"));
        }
        if self.hidden.is_empty() || self.coarse_hidden.is_empty() || self.hidden.iter().chain(&self.coarse_hidden).any(|&w| w == 0) {
            return Err(bad("hidden layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(bad(format!("holdout {} outside [0, 1)", self.holdout)));
        }
        if !(self.threshold_cm > 0.0) {
            return Err(bad("threshold_cm must be positive"));
        }
        Ok(())
    }

    pub fn evaluation_stations(&self) -> &[[f64; 4]] {
        if self.eval_stations.is_empty() {
            &self.stations
        } else {
            &self.eval_stations
        }
    }

    pub fn intrinsics(&self) -> Result<SensorIntrinsics> {
        SensorIntrinsics::new(
            self.elevations_deg.iter().map(|d| d.to_radians()).collect(),
            self.azimuth_count,
            self.s_max,
            self.scan_period,
        )
    }

    pub fn activation(&self) -> Result<Activation> {
        match self.activation.as_str() {
            "relu" => Ok(Activation::Relu),
            "silu" => Ok(Activation::Silu),
            other => Err(bad(format!("unknown activation {other:?}"))),
        }
    }

    pub fn render_mode(&self) -> Result<RenderMode> {
        RenderMode::parse(&self.render_mode)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_final_ratio: self.lr_final_ratio,
            alpha: self.alpha,
            seed: self.seed,
        }
    }
}
