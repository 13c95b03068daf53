//! Coarse-to-fine sampling along rays and the joint training step.
//!
//! A coarse network is queried at uniformly spaced bin centers and its
//! outputs, normalized, form a per-ray histogram. Fine test points are drawn
//! from that histogram and merged with the bin edges into the integration
//! grid evaluated by the fine network.

use nalgebra::Vector3;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{
    cdf_grad_from_mass_grad, cumulative_from_sigma, sigma_grad_from_cdf_grad, CdfTrace, Ray, SampleGrid,
    SigmaTrace,
};
use crate::losses::{
    cdf_loss_grad, coarse_loss_grad, depth_l2_grad, drop_bce_grad,
    normalized_fine_target, pool_ray_drop_grad, LossBreakdown, DEFAULT_ALPHA,
};
use crate::net::{encode_into, Adam, FieldModel, GradientTape};
use crate::sensor::UnitCube;
use crate::streams::stream;

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_FINE_SAMPLES: usize = 64;
pub const DEFAULT_LR_FINAL_RATIO: f64 = 1.0;

/// Rays per parallel work unit. Fixed so that gradient reduction order does
/// not depend on the thread count.
const CHUNK: usize = 8;

/// Piecewise-constant density over coarse bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalHistogram {
    edges: Vec<f64>,
    heights: Vec<f64>,
    masses: Vec<f64>,
    fallback: bool,
}

impl ProposalHistogram {
    /// Histogram with the given heights as-is.
    pub fn raw(edges: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || heights.len() + 1 != edges.len() {
            return Err(invalid(format!(
                "{} heights need {} edges, got {}",
                heights.len(),
                heights.len() + 1,
                edges.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("histogram edges must be strictly ascending"));
        }
        if let Some(h) = heights.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
            return Err(invalid(format!("histogram height {h} is negative or not finite")));
        }
        let masses = heights
            .iter()
            .zip(edges.windows(2))
            .map(|(h, w)| h * (w[1] - w[0]))
            .collect();
        Ok(Self {
            edges,
            heights,
            masses,
            fallback: false,
        })
    }

    /// Histogram scaled to unit total mass.
    pub fn from_heights(edges: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        let raw = Self::raw(edges, heights)?;
        let total: f64 = raw.masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Degenerate("histogram has no mass".into()));
        }
        let heights = raw.heights.iter().map(|h| h / total).collect();
        Self::raw(raw.edges, heights)
    }

    /// Equal density over the whole span, flagged as a fallback.
    pub fn uniform(edges: Vec<f64>) -> Result<Self> {
        let n = edges.len().saturating_sub(1);
        let mut hist = Self::from_heights(edges, vec![1.0; n])?;
        hist.fallback = true;
        Ok(hist)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    /// True when the coarse outputs were all zero and a uniform histogram
    /// was substituted.
    pub fn is_fallback(&self) -> bool {
        self.fallback
    }
}

/// Fine test points with the coarse bin each was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePointSet {
    pub points: Vec<f64>,
    pub provenance: Vec<usize>,
}

/// Uniform coarse bins over `[0, s_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseBins {
    pub centers: SampleGrid,
    pub edges: Vec<f64>,
}

pub fn coarse_bins(ray: &Ray, n_bins: usize) -> Result<CoarseBins> {
    if n_bins < 2 {
        return Err(invalid(format!("need at least 2 coarse bins, got {n_bins}")));
    }
    let width = ray.s_max / n_bins as f64;
    let centers = (0..n_bins).map(|i| (i as f64 + 0.5) * width).collect();
    let mut edges: Vec<f64> = (0..n_bins).map(|i| i as f64 * width).collect();
    edges.push(ray.s_max);
    Ok(CoarseBins {
        centers: SampleGrid::new(centers)?,
        edges,
    })
}

/// Encoded network inputs for the points at `distances` along `ray`.
pub fn ray_features(model: &FieldModel, frame: &UnitCube, ray: &Ray, distances: &[f64]) -> Result<Array2<f64>> {
    let encoding = &model.arch().encoding;
    let dim = encoding.dim();
    let mut data = Vec::with_capacity(distances.len() * dim);
    for &s in distances {
        let p = frame.to_unit(&ray.point_at(s));
        encode_into(&p, &ray.direction, encoding, &mut data)?;
    }
    Ok(Array2::from_shape_vec((distances.len(), dim), data).expect("feature rows have uniform width"))
}

/// Normalized coarse histogram for `ray`; all-zero outputs give a uniform
/// fallback histogram.
pub fn histogram_from_coarse(
    coarse: &FieldModel,
    frame: &UnitCube,
    ray: &Ray,
    bins: &CoarseBins,
) -> Result<ProposalHistogram> {
    let pass = coarse.forward(ray_features(coarse, frame, ray, bins.centers.gammas())?)?;
    histogram_from_heights(&bins.edges, pass.sigma)
}

fn histogram_from_heights(edges: &[f64], heights: Vec<f64>) -> Result<ProposalHistogram> {
    match ProposalHistogram::from_heights(edges.to_vec(), heights) {
        Err(Error::Degenerate(_)) => ProposalHistogram::uniform(edges.to_vec()),
        other => other,
    }
}

/// Stratified draws from the histogram: bin selection by inverting the
/// cumulative masses at `(k + u_k) / n`, then a uniform position within the
/// chosen bin. Points are returned in ascending order.
pub fn importance_sample(hist: &ProposalHistogram, n_fine: usize, rng: &mut impl Rng) -> Result<FinePointSet> {
    if n_fine == 0 {
        return Err(invalid("need at least one fine sample"));
    }
    let mut cumulative = Vec::with_capacity(hist.bins());
    let mut acc = 0.0;
    for m in hist.masses() {
        acc += m;
        cumulative.push(acc);
    }
    let total = acc;
    let last = hist.bins() - 1;
    let edges = hist.edges();
    let mut drawn: Vec<(f64, usize)> = (0..n_fine)
        .map(|k| {
            let level = (k as f64 + rng.gen::<f64>()) / n_fine as f64 * total;
            let mut bin = cumulative.partition_point(|&c| c <= level).min(last);
            // never land in an empty bin at the top of a flat stretch
            while hist.masses()[bin] <= 0.0 && bin > 0 {
                bin -= 1;
            }
            let (lo, hi) = (edges[bin], edges[bin + 1]);
            (lo + rng.gen::<f64>() * (hi - lo), bin)
        })
        .collect();
    drawn.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (points, provenance) = drawn.into_iter().unzip();
    Ok(FinePointSet { points, provenance })
}

/// Sorted union of the fine points and the bin edges.
pub fn fine_grid(points: &FinePointSet, edges: &[f64]) -> Result<SampleGrid> {
    let mut all: Vec<f64> = points.points.iter().chain(edges).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    SampleGrid::new(all)
}

/// Training objective of the fine network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// CDF step loss plus ray-drop cross-entropy.
    Probabilistic,
    /// Squared error of the opacity-weighted depth.
    Baseline,
}

impl Objective {
    pub fn code(self) -> u32 {
        match self {
            Objective::Probabilistic => 0,
            Objective::Baseline => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Objective::Probabilistic),
            1 => Some(Objective::Baseline),
            _ => None,
        }
    }
}

/// The coarse and fine networks plus the world-to-cube map they share.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModels {
    pub coarse: FieldModel,
    pub fine: FieldModel,
    pub frame: UnitCube,
    pub objective: Objective,
    pub n_bins: usize,
    pub n_fine: usize,
}

/// Everything computed for one ray on one pass through both networks.
#[derive(Debug, Clone)]
pub struct RayEvaluation {
    pub bins: CoarseBins,
    pub histogram: ProposalHistogram,
    pub fine_points: FinePointSet,
    pub sigma: SigmaTrace,
    pub cdf: CdfTrace,
    pub phi: Vec<f64>,
}

impl FieldModels {
    pub fn evaluate(&self, ray: &Ray, rng: &mut impl Rng) -> Result<RayEvaluation> {
        let bins = coarse_bins(ray, self.n_bins)?;
        let histogram = histogram_from_coarse(&self.coarse, &self.frame, ray, &bins)?;
        let fine_points = importance_sample(&histogram, self.n_fine, rng)?;
        let grid = fine_grid(&fine_points, &bins.edges)?;
        let pass = self.fine.forward(ray_features(&self.fine, &self.frame, ray, grid.gammas())?)?;
        let sigma = SigmaTrace::new(grid, pass.sigma)?;
        let cdf = cumulative_from_sigma(&sigma)?;
        Ok(RayEvaluation {
            bins,
            histogram,
            fine_points,
            sigma,
            cdf,
            phi: pass.phi,
        })
    }

    /// Fine network alone on a caller-chosen grid, bypassing the proposal.
    pub fn fine_trace(&self, ray: &Ray, grid: SampleGrid) -> Result<(CdfTrace, Vec<f64>)> {
        let pass = self.fine.forward(ray_features(&self.fine, &self.frame, ray, grid.gammas())?)?;
        let cdf = cumulative_from_sigma(&SigmaTrace::new(grid, pass.sigma)?)?;
        Ok((cdf, pass.phi))
    }
}

/// Optimisation settings for [`Trainer`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate reached at the last epoch, as a fraction of `lr`; the
    /// rate decays exponentially in between.
    pub lr_final_ratio: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            lr: 5e-4,
            lr_final_ratio: DEFAULT_LR_FINAL_RATIO,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return Err(invalid(format!("lr_final_ratio {} outside (0, 1]", self.lr_final_ratio)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        Ok(())
    }

    /// Learning rate used during `epoch`.
    pub fn lr_at(&self, epoch: u64) -> f64 {
        if self.epochs < 2 {
            return self.lr;
        }
        let t = (epoch as f64 / (self.epochs - 1) as f64).min(1.0);
        self.lr * self.lr_final_ratio.powf(t)
    }
}

/// Loss terms and parameter gradients of one batch, before any update.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub losses: LossBreakdown,
    pub fine: GradientTape,
    pub coarse: GradientTape,
}

#[derive(Debug, Clone)]
struct Partial {
    l_c: f64,
    l_drop: f64,
    l_coarse: f64,
    fine: Vec<f64>,
    coarse: Vec<f64>,
}

impl Partial {
    fn zeros(n_fine: usize, n_coarse: usize) -> Self {
        Self {
            l_c: 0.0,
            l_drop: 0.0,
            l_coarse: 0.0,
            fine: vec![0.0; n_fine],
            coarse: vec![0.0; n_coarse],
        }
    }

    fn add(&mut self, other: &Partial) {
        self.l_c += other.l_c;
        self.l_drop += other.l_drop;
        self.l_coarse += other.l_coarse;
        for (a, b) in self.fine.iter_mut().zip(&other.fine) {
            *a += b;
        }
        for (a, b) in self.coarse.iter_mut().zip(&other.coarse) {
            *a += b;
        }
    }
}

/// Per-batch normalizers: the CDF term averages over rays with
/// measurements, the other terms over all rays.
#[derive(Debug, Clone, Copy)]
struct BatchScale {
    per_ray: f64,
    per_returned: f64,
    alpha: f64,
}

/// Accumulates one ray's loss terms and gradients into `acc`. Sampling
/// randomness comes from `rng`.
fn accumulate_ray(
    models: &FieldModels,
    ray: &Ray,
    scale: BatchScale,
    rng: &mut impl Rng,
    acc: &mut Partial,
) -> Result<()> {
    let bins = coarse_bins(ray, models.n_bins)?;
    let coarse_pass = models
        .coarse
        .forward(ray_features(&models.coarse, &models.frame, ray, bins.centers.gammas())?)?;
    let histogram = histogram_from_heights(&bins.edges, coarse_pass.sigma.clone())?;
    let points = importance_sample(&histogram, models.n_fine, rng)?;
    let grid = fine_grid(&points, &bins.edges)?;
    let fine_pass = models
        .fine
        .forward(ray_features(&models.fine, &models.frame, ray, grid.gammas())?)?;
    let sigma = SigmaTrace::new(grid, fine_pass.sigma.clone())?;
    let cdf = cumulative_from_sigma(&sigma)?;
    let n = cdf.cdf().len();
    let k = ray.measurements.len() as f64;

    let mut d_cdf = vec![0.0; n];
    let mut d_phi = None;
    match models.objective {
        Objective::Probabilistic => {
            if ray.returned() {
                let loss = cdf_loss_grad(&cdf, &ray.measurements)?;
                let w = scale.alpha * scale.per_returned / k;
                acc.l_c += loss.value * scale.per_returned / k;
                for (d, g) in d_cdf.iter_mut().zip(&loss.grad_cdf) {
                    *d += w * g;
                }
            }
            if models.fine.arch().drop_head {
                let (q_hat, dq_dphi, dq_dc) = pool_ray_drop_grad(&fine_pass.phi, &cdf)?;
                let (bce, dl_dq) = drop_bce_grad(&[ray.returned()], &[q_hat])?;
                acc.l_drop += bce * scale.per_ray;
                let w = (1.0 - scale.alpha) * scale.per_ray * dl_dq[0];
                for (d, g) in d_cdf.iter_mut().zip(&dq_dc) {
                    *d += w * g;
                }
                d_phi = Some(dq_dphi.iter().map(|g| w * g).collect::<Vec<_>>());
            }
        }
        Objective::Baseline => {
            if ray.returned() {
                match depth_l2_grad(&cdf, &ray.measurements) {
                    Ok((value, _, d_mass)) => {
                        let w = scale.per_returned / k;
                        acc.l_c += value * w;
                        for (d, g) in d_cdf.iter_mut().zip(cdf_grad_from_mass_grad(&d_mass)) {
                            *d += w * g;
                        }
                    }
                    // no mass anywhere: nothing to move the depth with
                    Err(Error::UndefinedDepth) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let d_sigma = sigma_grad_from_cdf_grad(&cdf, &d_cdf);
    models
        .fine
        .backward_into(&fine_pass, &d_sigma, d_phi.as_deref(), &mut acc.fine);

    // the fine side enters the coarse loss as a constant target
    let (target, _) = normalized_fine_target(&bins.edges, &sigma);
    let (l_coarse, d_heights) = coarse_loss_grad(&bins.edges, &coarse_pass.sigma, &target)?;
    acc.l_coarse += l_coarse * scale.per_ray;
    let d_heights: Vec<f64> = d_heights.iter().map(|g| g * scale.per_ray).collect();
    models
        .coarse
        .backward_into(&coarse_pass, &d_heights, None, &mut acc.coarse);
    Ok(())
}

/// Loss and exact gradients of a batch. `stream_key` seeds each ray's
/// sampling stream together with the ray id.
pub fn batch_gradients(
    models: &FieldModels,
    batch: &[(u64, &Ray)],
    alpha: f64,
    stream_key: &[u64],
) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(invalid("empty training batch"));
    }
    // the depth objective has no drop term to weigh against
    let alpha = match models.objective {
        Objective::Probabilistic => alpha,
        Objective::Baseline => 1.0,
    };
    let returned = batch.iter().filter(|(_, r)| r.returned()).count();
    let scale = BatchScale {
        per_ray: 1.0 / batch.len() as f64,
        per_returned: if returned > 0 { 1.0 / returned as f64 } else { 0.0 },
        alpha,
    };
    let n_fine = models.fine.params().len();
    let n_coarse = models.coarse.params().len();
    let partials: Vec<Partial> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Partial::zeros(n_fine, n_coarse);
            for &(id, ray) in chunk {
                let mut key = stream_key.to_vec();
                key.push(id);
                accumulate_ray(models, ray, scale, &mut stream(&key), &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = Partial::zeros(n_fine, n_coarse);
    for p in &partials {
        total.add(p);
    }
    let losses = LossBreakdown::new(total.l_c, total.l_drop, total.l_coarse, alpha);
    Ok(BatchGradients {
        fine: GradientTape::new(losses.l_fine, total.fine),
        coarse: GradientTape::new(losses.l_coarse, total.coarse),
        losses,
    })
}

/// Per-epoch mean losses reported by [`Trainer::train_epoch`].
pub type EpochLosses = LossBreakdown;

/// Joint optimiser for both networks over a fixed ray set.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub models: FieldModels,
    pub config: TrainConfig,
    adam_fine: Adam,
    adam_coarse: Adam,
    epoch: u64,
}

impl Trainer {
    pub fn new(models: FieldModels, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam_fine = Adam::new(models.fine.params().len(), config.lr);
        let adam_coarse = Adam::new(models.coarse.params().len(), config.lr);
        Ok(Self {
            models,
            config,
            adam_fine,
            adam_coarse,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn steps(&self) -> u64 {
        self.adam_fine.step
    }

    /// One optimizer step per network on `batch`. Models are left untouched
    /// when the loss or gradients are not finite.
    pub fn train_step(&mut self, batch: &[(u64, &Ray)]) -> Result<LossBreakdown> {
        let key = [self.config.seed, self.epoch];
        let step = self.adam_fine.step + 1;
        let grads = batch_gradients(&self.models, batch, self.config.alpha, &key).map_err(|e| match e {
            Error::Divergence { reason, .. } => Error::Divergence { step, reason },
            other => other,
        })?;
        if !grads.losses.is_finite() || !grads.fine.is_finite() || !grads.coarse.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: format!("non-finite loss or gradient ({:?})", grads.losses),
            });
        }
        self.adam_fine.update(&mut self.models.fine, &grads.fine)?;
        self.adam_coarse.update(&mut self.models.coarse, &grads.coarse)?;
        Ok(grads.losses)
    }

    /// One shuffled pass over `rays`; returns batch-averaged losses.
    pub fn train_epoch(&mut self, rays: &[Ray]) -> Result<EpochLosses> {
        if rays.is_empty() {
            return Err(invalid("no training rays"));
        }
        let mut order: Vec<usize> = (0..rays.len()).collect();
        order.shuffle(&mut stream(&[self.config.seed, self.epoch, 0x5_4ff1e]));
        let lr = self.config.lr_at(self.epoch);
        self.adam_fine.lr = lr;
        self.adam_coarse.lr = lr;
        let mut sum = [0.0; 3];
        let mut alpha = self.config.alpha;
        let mut batches = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<(u64, &Ray)> = chunk.iter().map(|&i| (i as u64, &rays[i])).collect();
            let l = self.train_step(&batch)?;
            sum[0] += l.l_c;
            sum[1] += l.l_drop;
            sum[2] += l.l_coarse;
            alpha = l.alpha;
            batches += 1.0;
        }
        self.epoch += 1;
        Ok(LossBreakdown::new(
            sum[0] / batches,
            sum[1] / batches,
            sum[2] / batches,
            alpha,
        ))
    }
}

/// Origins of every ray, for sizing the unit cube.
pub fn ray_origins(rays: &[Ray]) -> Vec<Vector3<f64>> {
    rays.iter().map(|r| r.origin).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Architecture, EncodingConfig};
    use approx::assert_relative_eq;

    fn ray(s_max: f64) -> Ray {
        Ray::new(Vector3::zeros(), Vector3::x(), s_max, vec![]).unwrap()
    }

    #[test]
    fn coarse_bin_layout() {
        let b = coarse_bins(&ray(10.0), 2).unwrap();
        assert_eq!(b.centers.gammas(), &[2.5, 7.5]);
        assert_eq!(b.edges, vec![0.0, 5.0, 10.0]);
        let b = coarse_bins(&ray(20.0), 5).unwrap();
        assert!(b.edges.windows(2).all(|w| (w[1] - w[0] - 4.0).abs() < 1e-12));
        assert_eq!(*b.edges.last().unwrap(), 20.0);
        assert!(coarse_bins(&ray(20.0), 1).is_err());
    }

    #[test]
    fn histogram_normalizes_and_falls_back() {
        let edges = vec![0.0, 1.0, 2.0, 3.0];
        let h = histogram_from_heights(&edges, vec![2.0, 2.0, 4.0]).unwrap();
        assert_relative_eq!(h.masses().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(!h.is_fallback());
        let u = histogram_from_heights(&edges, vec![0.0; 3]).unwrap();
        assert!(u.is_fallback());
        for m in u.masses() {
            assert_relative_eq!(*m, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_bin_mass_keeps_points_inside() {
        let h = ProposalHistogram::from_heights(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0]).unwrap();
        let pts = importance_sample(&h, 100, &mut stream(&[4])).unwrap();
        assert!(pts.points.iter().all(|&p| (1.0..=2.0).contains(&p)));
        assert!(pts.provenance.iter().all(|&b| b == 1));
        assert!(pts.points.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let h = ProposalHistogram::from_heights(vec![0.0, 1.0, 3.0], vec![1.0, 2.0]).unwrap();
        let a = importance_sample(&h, 32, &mut stream(&[1, 2])).unwrap();
        let b = importance_sample(&h, 32, &mut stream(&[1, 2])).unwrap();
        let c = importance_sample(&h, 32, &mut stream(&[1, 3])).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn fine_grid_contains_edges() {
        let pts = FinePointSet {
            points: vec![0.5, 1.0, 1.7],
            provenance: vec![0, 1, 1],
        };
        let g = fine_grid(&pts, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.gammas(), &[0.0, 0.5, 1.0, 1.7, 2.0]);
    }

    fn probe_models(objective: Objective) -> FieldModels {
        let arch = |drop_head| Architecture {
            encoding: EncodingConfig {
                position_levels: 2,
                direction_levels: None,
            },
            hidden: vec![8],
            activation: Activation::Silu,
            drop_head,
        };
        FieldModels {
            coarse: FieldModel::new(arch(false), 1),
            fine: FieldModel::new(arch(objective == Objective::Probabilistic), 2),
            frame: UnitCube::from_bounds(Vector3::repeat(-12.0), Vector3::repeat(12.0)).unwrap(),
            objective,
            n_bins: 8,
            n_fine: 8,
        }
    }

    #[test]
    fn batch_gradients_are_thread_count_independent() {
        let rays: Vec<Ray> = (0..20)
            .map(|i| {
                let d = Vector3::new(1.0, 0.05 * i as f64, 0.0).normalize();
                let m = if i % 3 == 0 { vec![] } else { vec![5.0, 9.0] };
                Ray::new(Vector3::zeros(), d, 10.0, m).unwrap()
            })
            .collect();
        let batch: Vec<(u64, &Ray)> = rays.iter().enumerate().map(|(i, r)| (i as u64, r)).collect();
        let models = probe_models(Objective::Probabilistic);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| batch_gradients(&models, &batch, 0.999, &[7]).unwrap());
        let b = three.install(|| batch_gradients(&models, &batch, 0.999, &[7]).unwrap());
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.fine.gradient, b.fine.gradient);
        assert_eq!(a.coarse.gradient, b.coarse.gradient);
    }

    #[test]
    fn trainer_reduces_loss_on_a_wall() {
        let rays: Vec<Ray> = (0..16)
            .map(|i| {
                let d = Vector3::new(1.0, 0.04 * i as f64 - 0.3, 0.0).normalize();
                Ray::new(Vector3::zeros(), d, 10.0, vec![6.0 / d.x]).unwrap()
            })
            .collect();
        let config = TrainConfig {
            batch_size: 16,
            lr: 1e-2,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(probe_models(Objective::Probabilistic), config).unwrap();
        let first = trainer.train_epoch(&rays).unwrap();
        let mut last = first;
        for _ in 0..60 {
            last = trainer.train_epoch(&rays).unwrap();
        }
        assert!(last.l_c < 0.5 * first.l_c, "{first:?} -> {last:?}");
        assert_eq!(trainer.epoch(), 61);
    }
}
