//! Turning trained fields into range samples and point clouds.

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{inverse_transform_sample, pdf_from_cdf, render_confidence, CdfTrace, RangeSample, Ray};
use crate::losses::pool_ray_drop;
use crate::sampler::{FieldModels, Objective};
use crate::streams::stream;

/// Default number of independent draws per ray in stochastic mode.
pub const DEFAULT_DRAWS: usize = 3;
/// Default per-bin mass a first return must reach.
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenderMode {
    /// Independent inverse-transform draws.
    Stochastic { draws: usize },
    /// Inversion of `C` at a fixed level.
    Confidence { level: f64 },
    /// Nearest coarse bin whose mass reaches `threshold`.
    First { threshold: f64 },
    /// Coarse bin with the largest mass.
    Strongest,
}

impl Default for RenderMode {
    fn default() -> Self {
        RenderMode::Stochastic { draws: DEFAULT_DRAWS }
    }
}

impl RenderMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RenderMode::Stochastic { draws } if draws == 0 => Err(invalid("stochastic mode needs at least one draw")),
            RenderMode::Confidence { level } if !(level > 0.0 && level < 1.0) => {
                Err(invalid(format!("confidence level {level} outside (0, 1)")))
            }
            RenderMode::First { threshold } if !(threshold > 0.0 && threshold <= 1.0) => {
                Err(invalid(format!("peak threshold {threshold} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Parses `stochastic[:N]`, `confidence:L`, `first[:T]` or `strongest`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (text, None),
        };
        let num = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| invalid(format!("bad render mode argument {a:?}")))
        };
        let mode = match (name, arg) {
            ("stochastic", None) => RenderMode::default(),
            ("stochastic", Some(a)) => RenderMode::Stochastic {
                draws: a
                    .parse()
                    .map_err(|_| invalid(format!("bad draw count {a:?}")))?,
            },
            ("confidence", Some(a)) => RenderMode::Confidence { level: num(a)? },
            ("first", None) => RenderMode::First {
                threshold: DEFAULT_PEAK_THRESHOLD,
            },
            ("first", Some(a)) => RenderMode::First { threshold: num(a)? },
            ("strongest", None) => RenderMode::Strongest,
            _ => return Err(invalid(format!("unknown render mode {text:?}"))),
        };
        mode.validate()?;
        Ok(mode)
    }
}

/// Return mass per coarse bin, and the distance at which `C` crosses the
/// middle of each bin's rise.
fn binned_peaks(cdf: &CdfTrace, edges: &[f64]) -> Result<Vec<(f64, f64)>> {
    edges
        .windows(2)
        .map(|w| {
            let (lo, hi) = (cdf.eval(w[0]), cdf.eval(w[1]));
            let mass = (hi - lo).max(0.0);
            let mid = lo + mass / 2.0;
            let at = if mass > 0.0 && mid > 0.0 && mid < 1.0 {
                inverse_transform_sample(cdf, mid)?.range().unwrap_or(w[0])
            } else {
                0.5 * (w[0] + w[1])
            };
            Ok((mass, at))
        })
        .collect()
}

fn open_uniform(rng: &mut impl Rng) -> f64 {
    loop {
        let x: f64 = rng.gen();
        if x > 0.0 {
            return x;
        }
    }
}

/// Rendered samples for one ray.
pub fn render_ray(models: &FieldModels, ray: &Ray, mode: RenderMode, rng: &mut impl Rng) -> Result<Vec<RangeSample>> {
    let eval = models.evaluate(ray, rng)?;
    if models.objective == Objective::Baseline {
        let mass = pdf_from_cdf(&eval.cdf);
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Ok(vec![RangeSample::Drop]);
        }
        let depth = crate::field::baseline_weighted_depth(&mass, eval.cdf.grid());
        return match depth {
            Ok(d) => Ok(vec![RangeSample::Range(d)]),
            Err(Error::UndefinedDepth) => Ok(vec![RangeSample::Drop]),
            Err(e) => Err(e),
        };
    }
    if !eval.phi.is_empty() && pool_ray_drop(&eval.phi, &eval.cdf)? < 0.5 {
        return Ok(vec![RangeSample::Drop]);
    }
    Ok(match mode {
        RenderMode::Stochastic { draws } => (0..draws)
            .map(|_| inverse_transform_sample(&eval.cdf, open_uniform(rng)))
            .collect::<Result<_>>()?,
        RenderMode::Confidence { level } => vec![render_confidence(&eval.cdf, level)?],
        RenderMode::First { threshold } => {
            let peaks = binned_peaks(&eval.cdf, &eval.bins.edges)?;
            vec![peaks
                .iter()
                .find(|(m, _)| *m >= threshold)
                .map_or(RangeSample::Drop, |(_, s)| RangeSample::Range(*s))]
        }
        RenderMode::Strongest => {
            let peaks = binned_peaks(&eval.cdf, &eval.bins.edges)?;
            let best = peaks
                .iter()
                .fold(None::<(f64, f64)>, |best, &(m, s)| match best {
                    Some((bm, _)) if bm >= m => best,
                    _ if m > 0.0 => Some((m, s)),
                    _ => best,
                });
            vec![best.map_or(RangeSample::Drop, |(_, s)| RangeSample::Range(s))]
        }
    })
}

/// Ray-drop probability estimate `q̂` for `ray`, or `None` without a drop head.
pub fn drop_estimate(models: &FieldModels, ray: &Ray, rng: &mut impl Rng) -> Result<Option<f64>> {
    let eval = models.evaluate(ray, rng)?;
    if eval.phi.is_empty() {
        return Ok(None);
    }
    Ok(Some(pool_ray_drop(&eval.phi, &eval.cdf)?))
}

/// Renders every ray with its own stream keyed by `(seed, index)`.
pub fn render_rays(models: &FieldModels, rays: &[Ray], mode: RenderMode, seed: u64) -> Result<Vec<Vec<RangeSample>>> {
    mode.validate()?;
    rays.par_iter()
        .enumerate()
        .map(|(i, ray)| render_ray(models, ray, mode, &mut stream(&[seed, i as u64, 0x4e4d])))
        .collect()
}

/// World-frame points of every non-drop sample.
pub fn to_points(rays: &[Ray], samples: &[Vec<RangeSample>]) -> Vec<Vector3<f64>> {
    rays.iter()
        .zip(samples)
        .flat_map(|(ray, s)| s.iter().filter_map(move |r| r.range().map(|d| ray.point_at(d))))
        .collect()
}
