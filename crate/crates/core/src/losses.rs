//! Training objectives.
//!
//! Every loss comes in two flavours: a plain value function, and a `*_grad`
//! variant that also returns the gradient with respect to the loss's direct
//! inputs (`C`, σ, φ or the coarse heights). The trainer chains the latter
//! through [`crate::field`] and the networks.

use crate::error::{invalid, Error, Result};
use crate::field::{pdf_from_cdf, CdfTrace, SigmaTrace};
use crate::sampler::ProposalHistogram;

/// Default weight of the CDF term in the fine loss.
pub const DEFAULT_ALPHA: f64 = 0.999;

/// Probability clamp used by the cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

const NORMALIZATION_TOL: f64 = 1e-6;

/// Per-sample drop logits and their pooled ray-level estimate `q̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayDropEstimate {
    pub phi: Vec<f64>,
    pub pooled: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_c: f64,
    pub l_drop: f64,
    pub l_fine: f64,
    pub l_coarse: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    pub fn new(l_c: f64, l_drop: f64, l_coarse: f64, alpha: f64) -> Self {
        Self {
            l_c,
            l_drop,
            l_fine: fine_loss(l_c, l_drop, alpha),
            l_coarse,
            alpha,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_c.is_finite()
            && self.l_drop.is_finite()
            && self.l_fine.is_finite()
            && self.l_coarse.is_finite()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`cdf_loss_grad`].
#[derive(Debug, Clone, PartialEq)]
pub struct CdfLoss {
    pub value: f64,
    /// `∂L/∂C_j` on the trace grid.
    pub grad_cdf: Vec<f64>,
    /// The ray had no measurements and contributes nothing.
    pub drop_only: bool,
}

fn check_measurements(trace: &CdfTrace, measurements: &[f64]) -> Result<()> {
    let s_max = trace.grid().last();
    match measurements
        .iter()
        .find(|&&d| !(d > 0.0 && d <= s_max * (1.0 + 1e-12)))
    {
        Some(d) => Err(invalid(format!("measurement {d} outside (0, {s_max}]"))),
        None => Ok(()),
    }
}

/// Squared distance between `C` and the unit steps at each measurement,
/// `Σ_k ∫ (u(d_k) − C)² ds`, discretized with the trace's own elements.
pub fn cdf_loss(trace: &CdfTrace, measurements: &[f64]) -> Result<f64> {
    Ok(cdf_loss_grad(trace, measurements)?.value)
}

pub fn cdf_loss_grad(trace: &CdfTrace, measurements: &[f64]) -> Result<CdfLoss> {
    check_measurements(trace, measurements)?;
    let n = trace.cdf().len();
    if measurements.is_empty() {
        return Ok(CdfLoss {
            value: 0.0,
            grad_cdf: vec![0.0; n],
            drop_only: true,
        });
    }
    let mut sorted = measurements.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;

    let mut value = 0.0;
    let mut grad_cdf = Vec::with_capacity(n);
    let mut reached = 0usize;
    for ((&s, &c), &delta) in trace
        .grid()
        .gammas()
        .iter()
        .zip(trace.cdf())
        .zip(trace.grid().deltas())
    {
        while reached < sorted.len() && sorted[reached] <= s {
            reached += 1;
        }
        // `reached` steps are already 1 here, the rest are still 0
        let above = reached as f64;
        value += (above * (1.0 - c).powi(2) + (k - above) * c * c) * delta;
        grad_cdf.push(2.0 * (k * c - above) * delta);
    }
    Ok(CdfLoss {
        value,
        grad_cdf,
        drop_only: false,
    })
}

/// Per-bin integral of σ, by trapezoid accumulation over the fine samples
/// in each bin. Segments that straddle a bin edge are split at the edge with
/// linearly interpolated σ.
pub fn bin_integrals(edges: &[f64], fine: &SigmaTrace) -> Vec<f64> {
    let g = fine.grid().gammas();
    let sig = fine.sigmas();
    let mut out = vec![0.0; edges.len().saturating_sub(1)];
    if out.is_empty() {
        return out;
    }
    let lerp = |a: usize, s: f64| {
        let t = (s - g[a]) / (g[a + 1] - g[a]);
        sig[a] + t * (sig[a + 1] - sig[a])
    };
    for a in 0..g.len() - 1 {
        let (mut lo, hi) = (g[a], g[a + 1]);
        let mut sig_lo = sig[a];
        if hi <= edges[0] || lo >= edges[edges.len() - 1] {
            continue;
        }
        if lo < edges[0] {
            lo = edges[0];
            sig_lo = lerp(a, lo);
        }
        // first bin whose upper edge is above `lo`
        let mut bin = edges[1..].partition_point(|&e| e <= lo).min(out.len() - 1);
        loop {
            let upper = edges[bin + 1].min(hi);
            let sig_up = if upper == hi { sig[a + 1] } else { lerp(a, upper) };
            out[bin] += 0.5 * (sig_lo + sig_up) * (upper - lo);
            if upper >= hi || bin + 1 >= out.len() {
                break;
            }
            lo = upper;
            sig_lo = sig_up;
            bin += 1;
        }
    }
    out
}

/// Asymmetric proposal loss: `Σ_i max(0, ∫_bin σ − h_i w_i)`.
///
/// Both sides must already be normalized to unit mass (see
/// [`normalize_for_coarse`]); only bins where the histogram underestimates
/// the fine integral contribute.
pub fn coarse_loss(histogram: &ProposalHistogram, fine: &SigmaTrace) -> Result<f64> {
    let total_hist: f64 = histogram.masses().iter().sum();
    if (total_hist - 1.0).abs() > NORMALIZATION_TOL {
        return Err(invalid(format!(
            "histogram masses sum to {total_hist}, expected 1"
        )));
    }
    let integrals = bin_integrals(histogram.edges(), fine);
    let total_fine: f64 = integrals.iter().sum();
    if (total_fine - 1.0).abs() > NORMALIZATION_TOL {
        return Err(invalid(format!(
            "fine sigma integrates to {total_fine} over the bins, expected 1"
        )));
    }
    Ok(hinge_sum(histogram.masses(), &integrals))
}

fn hinge_sum(masses: &[f64], integrals: &[f64]) -> f64 {
    masses
        .iter()
        .zip(integrals)
        .map(|(m, f)| (f - m).max(0.0))
        .sum()
}

/// Scales the histogram to unit mass and the fine σ to unit integral.
pub fn normalize_for_coarse(
    histogram: &ProposalHistogram,
    fine: &SigmaTrace,
) -> Result<(ProposalHistogram, SigmaTrace)> {
    let hist_total: f64 = histogram.masses().iter().sum();
    if !(hist_total > 0.0) {
        return Err(Error::Degenerate("histogram has no mass".into()));
    }
    let fine_total: f64 = bin_integrals(histogram.edges(), fine).iter().sum();
    if !(fine_total > 0.0) {
        return Err(Error::Degenerate("fine sigma integrates to zero".into()));
    }
    let heights = histogram.heights().iter().map(|h| h / hist_total).collect();
    Ok((
        ProposalHistogram::from_heights(histogram.edges().to_vec(), heights)?,
        fine.scaled(1.0 / fine_total)?,
    ))
}

/// Normalized per-bin fine integrals, falling back to a uniform target when
/// σ is identically zero. The flag reports the fallback.
pub fn normalized_fine_target(edges: &[f64], fine: &SigmaTrace) -> (Vec<f64>, bool) {
    let integrals = bin_integrals(edges, fine);
    let total: f64 = integrals.iter().sum();
    if total > 0.0 && total.is_finite() {
        (integrals.iter().map(|v| v / total).collect(), false)
    } else {
        let n = integrals.len();
        let span = edges[n] - edges[0];
        let widths = edges.windows(2).map(|w| (w[1] - w[0]) / span).collect();
        (widths, true)
    }
}

/// Coarse loss and its gradient with respect to the raw (unnormalized)
/// coarse densities at the bin centers.
///
/// `fine_target` holds the normalized fine integral per bin and is treated as
/// a constant: no gradient flows back into the fine network.
pub fn coarse_loss_grad(
    edges: &[f64],
    raw_heights: &[f64],
    fine_target: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = raw_heights.len();
    if edges.len() != n + 1 || fine_target.len() != n {
        return Err(invalid("coarse loss inputs disagree on bin count"));
    }
    let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let z: f64 = raw_heights.iter().zip(&widths).map(|(h, w)| h * w).sum();
    if !(z > 0.0) {
        // uniform fallback has no dependence on the raw heights
        let span = edges[n] - edges[0];
        let masses: Vec<f64> = widths.iter().map(|w| w / span).collect();
        return Ok((hinge_sum(&masses, fine_target), vec![0.0; n]));
    }
    let masses: Vec<f64> = raw_heights
        .iter()
        .zip(&widths)
        .map(|(h, w)| h * w / z)
        .collect();
    let active: Vec<f64> = masses
        .iter()
        .zip(fine_target)
        .map(|(m, f)| if f > m { 1.0 } else { 0.0 })
        .collect();
    let value = hinge_sum(&masses, fine_target);
    let pulled: f64 = active.iter().zip(&masses).map(|(a, m)| a * m).sum();
    let grad = widths
        .iter()
        .zip(&active)
        .map(|(w, a)| w / z * (pulled - a))
        .collect();
    Ok((value, grad))
}

/// `q̂ = S(Σ_i m_i φ_i)` where `m_i` is the per-bin return mass.
pub fn pool_ray_drop(phi: &[f64], trace: &CdfTrace) -> Result<f64> {
    if phi.len() != trace.cdf().len() {
        return Err(invalid(format!(
            "{} drop logits for a grid of {} points",
            phi.len(),
            trace.cdf().len()
        )));
    }
    let mass = pdf_from_cdf(trace);
    Ok(sigmoid(mass.iter().zip(phi).map(|(m, p)| m * p).sum()))
}

/// Pooled estimate with `∂q̂/∂φ` and `∂q̂/∂C`.
pub fn pool_ray_drop_grad(phi: &[f64], trace: &CdfTrace) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let q = pool_ray_drop(phi, trace)?;
    let slope = q * (1.0 - q);
    let mass = pdf_from_cdf(trace);
    let d_phi = mass.iter().map(|m| slope * m).collect();
    let n = phi.len();
    let d_cdf = (0..n)
        .map(|j| slope * (phi[j] - if j + 1 < n { phi[j + 1] } else { 0.0 }))
        .collect();
    Ok((q, d_phi, d_cdf))
}

/// Mean binary cross-entropy between observed return flags and `q̂`.
pub fn drop_bce(q_true: &[bool], q_hat: &[f64]) -> Result<f64> {
    Ok(drop_bce_grad(q_true, q_hat)?.0)
}

/// Cross-entropy and `∂L/∂q̂_j`. Clamped estimates get zero gradient.
pub fn drop_bce_grad(q_true: &[bool], q_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
    if q_true.len() != q_hat.len() {
        return Err(invalid(format!(
            "{} flags vs {} estimates",
            q_true.len(),
            q_hat.len()
        )));
    }
    if q_true.is_empty() {
        return Err(invalid("cross-entropy over an empty batch"));
    }
    let n = q_true.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(q_hat.len());
    for (&q, &qh) in q_true.iter().zip(q_hat) {
        let c = qh.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let inside = c == qh;
        if q {
            value -= c.ln();
            grad.push(if inside { -1.0 / (n * c) } else { 0.0 });
        } else {
            value -= (1.0 - c).ln();
            grad.push(if inside { 1.0 / (n * (1.0 - c)) } else { 0.0 });
        }
    }
    Ok((value / n, grad))
}

pub fn fine_loss(l_c: f64, l_drop: f64, alpha: f64) -> f64 {
    alpha * l_c + (1.0 - alpha) * l_drop
}

/// Deterministic baseline objective `Σ_k (d_k − D)²` with `D` the mass-weighted
/// depth. Returns the value, the rendered depth and `∂L/∂m_j`.
pub fn depth_l2_grad(trace: &CdfTrace, measurements: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
    check_measurements(trace, measurements)?;
    let mass = pdf_from_cdf(trace);
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedDepth);
    }
    let g = trace.grid().gammas();
    let depth = mass.iter().zip(g).map(|(m, s)| m * s).sum::<f64>() / total;
    let value: f64 = measurements.iter().map(|d| (d - depth).powi(2)).sum();
    let d_depth: f64 = measurements.iter().map(|d| -2.0 * (d - depth)).sum();
    let grad = g.iter().map(|s| d_depth * (s - depth) / total).collect();
    Ok((value, depth, grad))
}
