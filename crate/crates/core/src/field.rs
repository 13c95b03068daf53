//! Return-probability fields along a single ray.
//!
//! A field assigns every path distance `s` a differential reflection
//! probability `σ(s)`: the probability per meter that a pulse which has
//! reached `s` generates a return there. Integrating along the ray gives
//! the cumulative return probability
//!
//! ```text
//! C(s) = 1 - exp(-∫₀ˢ σ(γ) dγ)
//! ```
//!
//! and the survival (transmission) probability `P(s) = 1 - C(s)`. Everything
//! in this module is a pure function of its inputs; randomness for sampling is
//! passed in by the caller as an explicit uniform draw.

use nalgebra::Vector3;

use crate::error::{invalid, Error, Result};

const UNIT_NORM_TOL: f64 = 1e-9;

/// A single emitted LiDAR ray together with every range measured along it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit look direction.
    pub direction: Vector3<f64>,
    /// Sensor maximum range in meters.
    pub s_max: f64,
    /// Measured ranges in meters. Empty for a dropped ray.
    pub measurements: Vec<f64>,
}

impl Ray {
    pub fn new(
        origin: Vector3<f64>,
        direction: Vector3<f64>,
        s_max: f64,
        measurements: Vec<f64>,
    ) -> Result<Self> {
        let ray = Self {
            origin,
            direction,
            s_max,
            measurements,
        };
        ray.validate()?;
        Ok(ray)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_max.is_finite() && self.s_max > 0.0) {
            return Err(invalid(format!("s_max must be positive, got {}", self.s_max)));
        }
        if (self.direction.norm() - 1.0).abs() > UNIT_NORM_TOL {
            return Err(invalid(format!(
                "ray direction must be unit norm, got |d| = {}",
                self.direction.norm()
            )));
        }
        if !self.origin.iter().all(|c| c.is_finite()) {
            return Err(invalid("ray origin is not finite"));
        }
        if let Some(d) = self
            .measurements
            .iter()
            .find(|&&d| !(d > 0.0 && d <= self.s_max))
        {
            return Err(invalid(format!(
                "measurement {d} outside (0, {}]",
                self.s_max
            )));
        }
        Ok(())
    }

    /// `q_ray`: true when at least one return was observed.
    pub fn returned(&self) -> bool {
        !self.measurements.is_empty()
    }

    pub fn point_at(&self, s: f64) -> Vector3<f64> {
        self.origin + self.direction * s
    }
}

/// Outcome of rendering a ray: either a range or an explicit drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeSample {
    Range(f64),
    Drop,
}

impl RangeSample {
    pub fn range(self) -> Option<f64> {
        match self {
            RangeSample::Range(r) => Some(r),
            RangeSample::Drop => None,
        }
    }

    pub fn is_drop(self) -> bool {
        matches!(self, RangeSample::Drop)
    }
}

/// Ascending path distances and their trapezoid integration elements.
///
/// Interior elements are `½(γ_{j+1} − γ_{j−1})`. The first element also
/// covers the stretch from the sensor to `γ_0`, the last one covers only the
/// half interval before it, so the elements sum to `γ_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    gammas: Vec<f64>,
    deltas: Vec<f64>,
}

impl SampleGrid {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.len() < 2 {
            return Err(invalid("a sample grid needs at least two points"));
        }
        if !gammas.iter().all(|g| g.is_finite()) {
            return Err(invalid("sample grid contains non-finite distances"));
        }
        if gammas[0] < 0.0 {
            return Err(invalid(format!("first sample {} is negative", gammas[0])));
        }
        if let Some(w) = gammas.windows(2).find(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "sample grid not strictly ascending: {} then {}",
                w[0], w[1]
            )));
        }
        let n = gammas.len();
        let mut deltas = Vec::with_capacity(n);
        deltas.push(0.5 * (gammas[1] - gammas[0]) + gammas[0]);
        for j in 1..n - 1 {
            deltas.push(0.5 * (gammas[j + 1] - gammas[j - 1]));
        }
        deltas.push(0.5 * (gammas[n - 1] - gammas[n - 2]));
        Ok(Self { gammas, deltas })
    }

    /// Evenly spaced grid over `[start, end]` with `n` points, both ends included.
    pub fn uniform(start: f64, end: f64, n: usize) -> Result<Self> {
        if n < 2 || !(end > start) {
            return Err(invalid(format!("bad uniform grid [{start}, {end}] x {n}")));
        }
        let h = (end - start) / (n - 1) as f64;
        let mut gammas: Vec<f64> = (0..n).map(|i| start + h * i as f64).collect();
        gammas[n - 1] = end;
        Self::new(gammas)
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.gammas[self.gammas.len() - 1]
    }
}

/// Sampled differential reflection probability along a ray (per meter).
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTrace {
    grid: SampleGrid,
    sigmas: Vec<f64>,
}

impl SigmaTrace {
    pub fn new(grid: SampleGrid, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() != grid.len() {
            return Err(invalid(format!(
                "{} sigma values for a grid of {} points",
                sigmas.len(),
                grid.len()
            )));
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(invalid(format!("sigma must be finite and nonnegative, got {s}")));
        }
        Ok(Self { grid, sigmas })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Trapezoid integral of σ over the whole grid span `[γ_0, γ_J]`.
    pub fn trapezoid_integral(&self) -> f64 {
        let g = self.grid.gammas();
        g.windows(2)
            .zip(self.sigmas.windows(2))
            .map(|(gw, sw)| 0.5 * (sw[0] + sw[1]) * (gw[1] - gw[0]))
            .sum()
    }

    /// Same grid, σ multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.sigmas.iter().map(|s| s * factor).collect(),
        )
    }
}

/// Cumulative return probability `C` and survival `P` at each grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfTrace {
    grid: SampleGrid,
    cdf: Vec<f64>,
    survival: Vec<f64>,
}

impl CdfTrace {
    /// Builds a trace directly from cumulative values, e.g. an analytic or
    /// hand-written distribution.
    pub fn from_cdf(grid: SampleGrid, cdf: Vec<f64>) -> Result<Self> {
        if cdf.len() != grid.len() {
            return Err(invalid("cdf length does not match grid"));
        }
        if let Some(c) = cdf.iter().find(|c| !(**c >= 0.0 && **c <= 1.0)) {
            return Err(invalid(format!("cdf value {c} outside [0, 1]")));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("cdf must be nondecreasing"));
        }
        let survival = cdf.iter().map(|c| 1.0 - c).collect();
        Ok(Self {
            grid,
            cdf,
            survival,
        })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    /// Total return probability within the grid span, `C(γ_J)`.
    pub fn total(&self) -> f64 {
        self.cdf[self.cdf.len() - 1]
    }

    /// Piecewise-linear `C(s)`, with `C(0) = 0` at the sensor.
    pub fn eval(&self, s: f64) -> f64 {
        let g = self.grid.gammas();
        if s <= 0.0 {
            return if g[0] <= 0.0 { self.cdf[0] } else { 0.0 };
        }
        let j = g.partition_point(|&x| x < s);
        if j == g.len() {
            return self.total();
        }
        if g[j] == s {
            return self.cdf[j];
        }
        let (s0, c0) = if j == 0 { (0.0, 0.0) } else { (g[j - 1], self.cdf[j - 1]) };
        c0 + (self.cdf[j] - c0) * (s - s0) / (g[j] - s0)
    }
}

/// Integrates σ into `C` and `P`.
///
/// The optical depth is accumulated as a plain sum and exponentiated once
/// per point, so long grids cannot underflow a running product.
pub fn cumulative_from_sigma(trace: &SigmaTrace) -> Result<CdfTrace> {
    let grid = trace.grid.clone();
    let mut depth = 0.0;
    let mut cdf = Vec::with_capacity(grid.len());
    let mut survival = Vec::with_capacity(grid.len());
    for (sigma, delta) in trace.sigmas.iter().zip(grid.deltas()) {
        depth += sigma * delta;
        survival.push((-depth).exp());
        cdf.push(-(-depth).exp_m1());
    }
    Ok(CdfTrace {
        grid,
        cdf,
        survival,
    })
}

/// Per-bin probability mass `C_j − C_{j−1}` (with `C_{−1} = 0`).
pub fn pdf_from_cdf(trace: &CdfTrace) -> Vec<f64> {
    let mut prev = 0.0;
    trace
        .cdf
        .iter()
        .map(|&c| {
            let m = (c - prev).max(0.0);
            prev = c;
            m
        })
        .collect()
}

/// Inverts `C` at the uniform draw `x`.
///
/// Returns the smallest `s` with `C(s) ≥ x` on the piecewise-linear
/// interpolant, or [`RangeSample::Drop`] when `x` exceeds the total return
/// probability of the ray.
pub fn inverse_transform_sample(trace: &CdfTrace, x: f64) -> Result<RangeSample> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("uniform draw {x} outside (0, 1)")));
    }
    if x > trace.total() {
        return Ok(RangeSample::Drop);
    }
    let g = trace.grid.gammas();
    let j = trace.cdf.partition_point(|&c| c < x);
    let (s0, c0) = if j == 0 {
        (0.0, 0.0)
    } else {
        (g[j - 1], trace.cdf[j - 1])
    };
    let c1 = trace.cdf[j];
    let s = if c1 > c0 {
        s0 + (x - c0) / (c1 - c0) * (g[j] - s0)
    } else {
        g[j]
    };
    Ok(RangeSample::Range(s))
}

/// Deterministic rendering at a fixed confidence level.
pub fn render_confidence(trace: &CdfTrace, level: f64) -> Result<RangeSample> {
    inverse_transform_sample(trace, level)
}

/// Location of the largest per-bin mass.
pub fn strongest_return(trace: &CdfTrace) -> RangeSample {
    let mass = pdf_from_cdf(trace);
    let mut best: Option<(usize, f64)> = None;
    for (j, &m) in mass.iter().enumerate() {
        if m > 0.0 && best.map_or(true, |(_, bm)| m > bm) {
            best = Some((j, m));
        }
    }
    match best {
        Some((j, _)) => RangeSample::Range(trace.grid.gammas()[j]),
        None => RangeSample::Drop,
    }
}

/// Location of the first bin whose mass reaches `threshold`.
pub fn first_return(trace: &CdfTrace, threshold: f64) -> Result<RangeSample> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid(format!("peak threshold {threshold} outside (0, 1]")));
    }
    let mass = pdf_from_cdf(trace);
    Ok(mass
        .iter()
        .position(|&m| m >= threshold)
        .map_or(RangeSample::Drop, |j| {
            RangeSample::Range(trace.grid.gammas()[j])
        }))
}

/// Deterministic weighted depth `D = Σ w_p s_p` with weights normalized to
/// sum to one.
pub fn baseline_weighted_depth(weights: &[f64], grid: &SampleGrid) -> Result<f64> {
    if weights.len() != grid.len() {
        return Err(invalid("weights and grid differ in length"));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(invalid(format!("weight {w} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedDepth);
    }
    let weighted: f64 = weights
        .iter()
        .zip(grid.gammas())
        .map(|(w, s)| w * s)
        .sum();
    Ok(weighted / total)
}

/// Pulls a gradient with respect to `C_j` back onto σ.
///
/// `∂C_j/∂σ_i = δ_i P_j` for `i ≤ j`, so the result is a reverse cumulative
/// sum of `g_j P_j` scaled by the integration element.
pub fn sigma_grad_from_cdf_grad(trace: &CdfTrace, d_cdf: &[f64]) -> Vec<f64> {
    let n = trace.cdf.len();
    debug_assert_eq!(d_cdf.len(), n);
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for j in (0..n).rev() {
        acc += d_cdf[j] * trace.survival[j];
        out[j] = acc * trace.grid.deltas[j];
    }
    out
}

/// Pulls a gradient with respect to the per-bin masses back onto `C`.
pub fn cdf_grad_from_mass_grad(d_mass: &[f64]) -> Vec<f64> {
    let n = d_mass.len();
    (0..n)
        .map(|j| d_mass[j] - if j + 1 < n { d_mass[j + 1] } else { 0.0 })
        .collect()
}
