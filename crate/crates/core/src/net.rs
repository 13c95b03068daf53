//! The learnable field `F(x, λ̂)`: positional encoding, a small fully
//! connected network with a σ head (softplus) and an optional φ ray-drop
//! head, exact reverse-mode gradients and an Adam optimizer.
//!
//! Parameters live in one flat `Vec<f64>`; layer `l` stores its weight
//! matrix row-major as `fan_in × fan_out` followed by `fan_out` biases.

use std::f64::consts::PI;

use nalgebra::Vector3;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Positions this far outside `[-1, 1]` indicate a scaling bug upstream.
pub const CUBE_SLACK: f64 = 1.001;

const SIGMA_BIAS_INIT: f64 = -2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Silu => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Silu),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Silu => z * sigmoid(z),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    crate::losses::sigmoid(x)
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub position_levels: usize,
    /// `None` removes the look direction from the input entirely.
    pub direction_levels: Option<usize>,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            position_levels: 8,
            direction_levels: Some(2),
        }
    }
}

impl EncodingConfig {
    pub fn dim(&self) -> usize {
        3 + 6 * self.position_levels + self.direction_levels.map_or(0, |l| 3 + 6 * l)
    }
}

fn push_frequencies(v: &Vector3<f64>, levels: usize, out: &mut Vec<f64>) {
    out.extend(v.iter());
    let mut freq = PI;
    for _ in 0..levels {
        out.extend(v.iter().map(|c| (freq * c).sin()));
        out.extend(v.iter().map(|c| (freq * c).cos()));
        freq *= 2.0;
    }
}

/// Raw coordinates followed by `sin`, `cos` at `2^k π`, `k < levels`.
pub fn encode_position(position: &Vector3<f64>, levels: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(3 + 6 * levels);
    check_cube(position)?;
    push_frequencies(position, levels, &mut out);
    Ok(out)
}

fn check_cube(position: &Vector3<f64>) -> Result<()> {
    if position.iter().any(|c| !(c.abs() <= CUBE_SLACK)) {
        return Err(Error::OutOfBounds([position.x, position.y, position.z]));
    }
    Ok(())
}

/// Appends the encoded `(position, direction)` pair to `out`.
pub fn encode_into(
    position: &Vector3<f64>,
    direction: &Vector3<f64>,
    config: &EncodingConfig,
    out: &mut Vec<f64>,
) -> Result<()> {
    check_cube(position)?;
    push_frequencies(position, config.position_levels, out);
    if let Some(levels) = config.direction_levels {
        push_frequencies(direction, levels, out);
    }
    Ok(())
}

pub fn encode(
    position: &Vector3<f64>,
    direction: &Vector3<f64>,
    config: &EncodingConfig,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(config.dim());
    encode_into(position, direction, config, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoding: EncodingConfig,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Whether the network carries the φ ray-drop output.
    pub drop_head: bool,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        self.encoding.dim()
    }

    pub fn output_dim(&self) -> usize {
        if self.drop_head {
            2
        } else {
            1
        }
    }

    /// `(fan_in, fan_out)` for every affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_dim();
        for &w in &self.hidden {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, self.output_dim()));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Network parameters together with the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    arch: Architecture,
    params: Vec<f64>,
}

/// Activations recorded by [`FieldModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
}

impl FieldModel {
    /// Uniform He initialisation from a seeded ChaCha stream.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        let dims = arch.layer_dims();
        let last = dims.len() - 1;
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let bound = if l == last {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
            if l == last {
                params.push(SIGMA_BIAS_INIT);
                params.extend(std::iter::repeat(0.0).take(fan_out - 1));
            } else {
                params.extend(std::iter::repeat(0.0).take(fan_out));
            }
        }
        Self { arch, params }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(invalid(format!(
                "{} parameters for an architecture of {}",
                params.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, offset: usize, fan_in: usize, fan_out: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let w = ArrayView2::from_shape((fan_in, fan_out), &self.params[offset..offset + fan_in * fan_out])
            .expect("layer shape matches parameter layout");
        let b_off = offset + fan_in * fan_out;
        let b = ArrayView1::from(&self.params[b_off..b_off + fan_out]);
        (w, b)
    }

    /// Evaluates σ (and φ, when present) for a batch of encoded features,
    /// one row per point.
    pub fn forward(&self, features: Array2<f64>) -> Result<ForwardPass> {
        if features.ncols() != self.arch.input_dim() {
            return Err(invalid(format!(
                "feature width {} does not match network input {}",
                features.ncols(),
                self.arch.input_dim()
            )));
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::CorruptedModel(format!("parameter {i} is not finite")));
        }
        let dims = self.arch.layer_dims();
        let last = dims.len() - 1;
        let mut inputs = Vec::with_capacity(dims.len());
        let mut pre = Vec::with_capacity(dims.len());
        let mut x = features;
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let (w, b) = self.layer(offset, fan_in, fan_out);
            offset += fan_in * fan_out + fan_out;
            let mut z = x.dot(&w);
            z += &b;
            let next = if l == last {
                z.clone()
            } else {
                let act = self.arch.activation;
                z.mapv(|v| act.apply(v))
            };
            inputs.push(x);
            pre.push(z);
            x = next;
        }
        let out = &pre[last];
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: 0,
                reason: "network output is not finite".into(),
            });
        }
        let sigma = out.column(0).iter().map(|&z| softplus(z)).collect();
        let phi = if self.arch.drop_head {
            out.column(1).to_vec()
        } else {
            Vec::new()
        };
        Ok(ForwardPass {
            inputs,
            pre,
            sigma,
            phi,
        })
    }

    /// Exact parameter gradient given `∂L/∂σ` and `∂L/∂φ` for every point of
    /// a recorded forward pass.
    pub fn backward(&self, pass: &ForwardPass, d_sigma: &[f64], d_phi: Option<&[f64]>) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(pass, d_sigma, d_phi, &mut grad);
        grad
    }

    /// Like [`FieldModel::backward`] but accumulates into `grad`.
    pub fn backward_into(
        &self,
        pass: &ForwardPass,
        d_sigma: &[f64],
        d_phi: Option<&[f64]>,
        grad: &mut [f64],
    ) {
        let dims = self.arch.layer_dims();
        let last = dims.len() - 1;
        let n = pass.sigma.len();
        assert_eq!(d_sigma.len(), n, "one sigma gradient per point");
        assert_eq!(grad.len(), self.params.len());

        let mut dz = Array2::<f64>::zeros((n, self.arch.output_dim()));
        for (i, (&g, &z)) in d_sigma.iter().zip(pass.pre[last].column(0)).enumerate() {
            dz[[i, 0]] = g * sigmoid(z);
        }
        if let (true, Some(dp)) = (self.arch.drop_head, d_phi) {
            assert_eq!(dp.len(), n, "one phi gradient per point");
            for (i, &g) in dp.iter().enumerate() {
                dz[[i, 1]] = g;
            }
        }

        let mut offsets = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &(i, o) in &dims {
            offsets.push(offset);
            offset += i * o + o;
        }

        for l in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[l];
            let off = offsets[l];
            let gw = pass.inputs[l].t().dot(&dz);
            for (dst, src) in grad[off..off + fan_in * fan_out].iter_mut().zip(gw.iter()) {
                *dst += src;
            }
            let gb = dz.sum_axis(Axis(0));
            for (dst, src) in grad[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]
                .iter_mut()
                .zip(gb.iter())
            {
                *dst += src;
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(off, fan_in, fan_out);
            let mut dx = dz.dot(&w.t());
            let act = self.arch.activation;
            dx.zip_mut_with(&pass.pre[l - 1], |d, &z| *d *= act.derivative(z));
            dz = dx;
        }
    }
}

/// A scalar loss and its gradient with respect to one model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

impl GradientTape {
    pub fn new(loss: f64, gradient: Vec<f64>) -> Self {
        Self { loss, gradient }
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.loss *= factor;
        self.gradient.iter_mut().for_each(|g| *g *= factor);
        self
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn update(&mut self, model: &mut FieldModel, tape: &GradientTape) -> Result<()> {
        let n = self.m.len();
        if tape.gradient.len() != n || model.params.len() != n {
            return Err(invalid(format!(
                "optimizer holds {n} moments, model {} params, gradient {} entries",
                model.params.len(),
                tape.gradient.len()
            )));
        }
        if !tape.is_finite() {
            let bad = tape.gradient.iter().filter(|g| !g.is_finite()).count();
            return Err(Error::Divergence {
                step: self.step + 1,
                reason: format!(
                    "loss {} with {bad} non-finite gradient entries",
                    tape.loss
                ),
            });
        }
        let t = self.step + 1;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        let mut next = model.params.clone();
        for i in 0..n {
            let g = tape.gradient[i];
            let m = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            next[i] -= self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
        }
        if let Some(i) = next.iter().position(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                step: t,
                reason: format!("parameter {i} became non-finite (loss {})", tape.loss),
            });
        }
        model.params = next;
        self.step = t;
        Ok(())
    }
}
