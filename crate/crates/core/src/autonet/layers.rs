//! Layer implementations. Each layer caches what its backward pass needs
//! during a training-mode forward pass and accumulates parameter gradients
//! into [`Parameter::grad`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{Parameter, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

const MISSING_CACHE: &str = "backward called without a training-mode forward pass";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv1d { in_channels: usize, out_channels: usize, kernel: usize },
    BatchNorm { features: usize, momentum: f64, epsilon: f64 },
    Dropout { rate: f64 },
    Relu,
    Flatten,
}

pub const BATCHNORM_MOMENTUM: f64 = 0.9;
pub const BATCHNORM_EPSILON: f64 = 1e-5;

impl LayerSpec {
    pub fn batch_norm(features: usize) -> Self {
        LayerSpec::BatchNorm {
            features,
            momentum: BATCHNORM_MOMENTUM,
            epsilon: BATCHNORM_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => in_channels > 0 && out_channels > 0 && kernel % 2 == 1,
            LayerSpec::BatchNorm {
                features,
                momentum,
                epsilon,
            } => features > 0 && (0.0..1.0).contains(&momentum) && epsilon > 0.0,
            LayerSpec::Dropout { rate } => (0.0..1.0).contains(&rate),
            LayerSpec::Relu | LayerSpec::Flatten => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("invalid layer {self:?}")))
        }
    }
}

/// Fully connected layer, `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Parameter::zeros(&[inputs, outputs]),
            bias: Parameter::zeros(&[outputs]),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (din, dout) = (self.inputs(), self.outputs());
        if x.shape().len() != 2 || x.shape()[1] != din {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects [n, {din}], got {:?}",
                x.shape()
            )));
        }
        let w = self.weight.value.data();
        let b = self.bias.value.data();
        let mut y = Tensor::zeros(&[x.rows(), dout]);
        y.data_mut()
            .par_chunks_mut(dout)
            .zip(x.data().par_chunks(din))
            .for_each(|(yr, xr)| {
                yr.copy_from_slice(b);
                for (i, &xi) in xr.iter().enumerate() {
                    if xi == T::ZERO {
                        continue;
                    }
                    for (yo, &wo) in yr.iter_mut().zip(&w[i * dout..(i + 1) * dout]) {
                        *yo += xi * wo;
                    }
                }
            });
        if mode == Mode::Train {
            self.input = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.as_ref().expect(MISSING_CACHE);
        let (din, dout) = (self.inputs(), self.outputs());
        let n = x.rows();
        let g = grad.data();
        let xd = x.data();

        let gb = self.bias.grad.data_mut();
        for row in g.chunks(dout) {
            for (acc, &v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
        self.weight
            .grad
            .data_mut()
            .par_chunks_mut(dout)
            .enumerate()
            .for_each(|(i, gw)| {
                for s in 0..n {
                    let xi = xd[s * din + i];
                    if xi == T::ZERO {
                        continue;
                    }
                    for (acc, &go) in gw.iter_mut().zip(&g[s * dout..(s + 1) * dout]) {
                        *acc += xi * go;
                    }
                }
            });
        let w = self.weight.value.data();
        let mut gx = Tensor::zeros(&[n, din]);
        gx.data_mut()
            .par_chunks_mut(din)
            .zip(g.par_chunks(dout))
            .for_each(|(gxr, gr)| {
                for (i, acc) in gxr.iter_mut().enumerate() {
                    *acc = w[i * dout..(i + 1) * dout]
                        .iter()
                        .zip(gr)
                        .map(|(&a, &b)| a * b)
                        .sum();
                }
            });
        gx
    }
}

/// 1-D cross-correlation over `[n, channels, length]` with stride 1 and
/// zero "same" padding (`kernel` must be odd).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    /// `[out_channels, in_channels, kernel]`
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv1d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Conv1d {
            weight: Parameter::zeros(&[out_channels, in_channels, kernel]),
            bias: Parameter::zeros(&[out_channels]),
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        let s = self.weight.shape();
        (s[0], s[1], s[2])
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (cout, cin, k) = self.dims();
        if x.shape().len() != 3 || x.shape()[1] != cin {
            return Err(Error::ShapeMismatch(format!(
                "conv1d expects [n, {cin}, L], got {:?}",
                x.shape()
            )));
        }
        let (n, len) = (x.rows(), x.shape()[2]);
        let pad = (k / 2) as isize;
        let w = self.weight.value.data();
        let b = self.bias.value.data();
        let mut y = Tensor::zeros(&[n, cout, len]);
        y.data_mut()
            .par_chunks_mut(cout * len)
            .zip(x.data().par_chunks(cin * len))
            .for_each(|(ys, xs)| {
                for o in 0..cout {
                    let yo = &mut ys[o * len..(o + 1) * len];
                    yo.fill(b[o]);
                    for c in 0..cin {
                        let xc = &xs[c * len..(c + 1) * len];
                        for j in 0..k {
                            let wv = w[(o * cin + c) * k + j];
                            let Some((lo, hi, shift)) = overlap(len, j as isize - pad) else {
                                continue;
                            };
                            let src = &xc[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                            for (yv, &xv) in yo[lo..hi].iter_mut().zip(src) {
                                *yv += wv * xv;
                            }
                        }
                    }
                }
            });
        if mode == Mode::Train {
            self.input = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.as_ref().expect(MISSING_CACHE);
        let (cout, cin, k) = self.dims();
        let (n, len) = (x.rows(), x.shape()[2]);
        let pad = (k / 2) as isize;
        let w = self.weight.value.data();
        let wlen = w.len();

        // Per-sample partial weight gradients, reduced below in sample order.
        let partials: Vec<(Vec<T>, Vec<T>, Vec<T>)> = x
            .data()
            .par_chunks(cin * len)
            .zip(grad.data().par_chunks(cout * len))
            .map(|(xs, gs)| {
                let mut gx = vec![T::ZERO; cin * len];
                let mut gw = vec![T::ZERO; wlen];
                let mut gb = vec![T::ZERO; cout];
                for o in 0..cout {
                    let go = &gs[o * len..(o + 1) * len];
                    gb[o] = go.iter().copied().sum();
                    for c in 0..cin {
                        let xc = &xs[c * len..(c + 1) * len];
                        let gxc = &mut gx[c * len..(c + 1) * len];
                        for j in 0..k {
                            let widx = (o * cin + c) * k + j;
                            let Some((lo, hi, shift)) = overlap(len, j as isize - pad) else {
                                continue;
                            };
                            let (slo, shi) = ((lo as isize + shift) as usize, (hi as isize + shift) as usize);
                            gw[widx] = go[lo..hi]
                                .iter()
                                .zip(&xc[slo..shi])
                                .map(|(&a, &b)| a * b)
                                .sum();
                            let wv = w[widx];
                            for (acc, &gv) in gxc[slo..shi].iter_mut().zip(&go[lo..hi]) {
                                *acc += wv * gv;
                            }
                        }
                    }
                }
                (gx, gw, gb)
            })
            .collect();

        let mut gx = Vec::with_capacity(n * cin * len);
        let gw_acc = self.weight.grad.data_mut();
        let gb_acc = self.bias.grad.data_mut();
        for (gxs, gw, gb) in partials {
            gx.extend_from_slice(&gxs);
            for (a, v) in gw_acc.iter_mut().zip(gw) {
                *a += v;
            }
            for (a, v) in gb_acc.iter_mut().zip(gb) {
                *a += v;
            }
        }
        Tensor::from_vec(&[n, cin, len], gx).expect("gradient shape")
    }
}

/// Output range `[lo, hi)` whose source index `i + shift` stays inside
/// `[0, len)`, or `None` when the kernel tap never overlaps the signal.
#[inline]
fn overlap(len: usize, shift: isize) -> Option<(usize, usize, isize)> {
    let lo = (-shift).max(0);
    let hi = (len as isize - shift).min(len as isize);
    (lo < hi).then_some((lo as usize, hi as usize, shift))
}

/// Batch normalization over the channel axis (axis 1) of `[n, C]` or
/// `[n, C, L]` inputs. Running statistics follow
/// `running = momentum * running + (1 - momentum) * batch` with the biased
/// batch variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct BnCache<T> {
    shape: Vec<usize>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(features: usize, momentum: f64, epsilon: f64) -> Self {
        BatchNorm {
            gamma: Parameter::new(Tensor::filled(&[features], T::ONE)),
            beta: Parameter::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], T::ONE),
            momentum,
            epsilon,
            cache: None,
        }
    }

    fn layout(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let c = self.gamma.len();
        let s = x.shape();
        let ok = (s.len() == 2 || s.len() == 3) && s[1] == c;
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "batch norm over {c} features got {s:?}"
            )));
        }
        Ok((s[0], c, if s.len() == 3 { s[2] } else { 1 }))
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, inner) = self.layout(x)?;
        let xd = x.data();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let eps = T::from_f64(self.epsilon);
        let mut y = Tensor::zeros(x.shape());
        let yd = y.data_mut();
        let at = |s: usize, ch: usize, i: usize| (s * c + ch) * inner + i;
        match mode {
            Mode::Infer => {
                let rm = self.running_mean.data();
                let rv = self.running_var.data();
                for ch in 0..c {
                    let inv = T::ONE / (rv[ch] + eps).sqrt();
                    for s in 0..n {
                        for i in 0..inner {
                            let k = at(s, ch, i);
                            yd[k] = gamma[ch] * (xd[k] - rm[ch]) * inv + beta[ch];
                        }
                    }
                }
            }
            Mode::Train => {
                if n < 2 {
                    return Err(Error::BatchTooSmall);
                }
                let m = T::from_f64((n * inner) as f64);
                let keep = T::from_f64(self.momentum);
                let blend = T::from_f64(1.0 - self.momentum);
                let mut xhat = vec![T::ZERO; xd.len()];
                let mut inv_std = vec![T::ZERO; c];
                for ch in 0..c {
                    let mut sum = T::ZERO;
                    for s in 0..n {
                        for i in 0..inner {
                            sum += xd[at(s, ch, i)];
                        }
                    }
                    let mean = sum / m;
                    let mut sq = T::ZERO;
                    for s in 0..n {
                        for i in 0..inner {
                            let d = xd[at(s, ch, i)] - mean;
                            sq += d * d;
                        }
                    }
                    let var = sq / m;
                    let inv = T::ONE / (var + eps).sqrt();
                    inv_std[ch] = inv;
                    for s in 0..n {
                        for i in 0..inner {
                            let k = at(s, ch, i);
                            xhat[k] = (xd[k] - mean) * inv;
                            yd[k] = gamma[ch] * xhat[k] + beta[ch];
                        }
                    }
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = keep * *rm + blend * mean;
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = keep * *rv + blend * var;
                }
                self.cache = Some(BnCache {
                    shape: x.shape().to_vec(),
                    xhat,
                    inv_std,
                });
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.as_ref().expect(MISSING_CACHE);
        let c = self.gamma.len();
        let n = cache.shape[0];
        let inner = if cache.shape.len() == 3 { cache.shape[2] } else { 1 };
        let at = |s: usize, ch: usize, i: usize| (s * c + ch) * inner + i;
        let g = grad.data();
        let gamma = self.gamma.value.data();
        let m = T::from_f64((n * inner) as f64);
        let mut gx = vec![T::ZERO; g.len()];
        for ch in 0..c {
            let (mut sum_g, mut sum_gx) = (T::ZERO, T::ZERO);
            for s in 0..n {
                for i in 0..inner {
                    let k = at(s, ch, i);
                    sum_g += g[k];
                    sum_gx += g[k] * cache.xhat[k];
                }
            }
            self.gamma.grad.data_mut()[ch] += sum_gx;
            self.beta.grad.data_mut()[ch] += sum_g;
            let scale = gamma[ch] * cache.inv_std[ch] / m;
            for s in 0..n {
                for i in 0..inner {
                    let k = at(s, ch, i);
                    gx[k] = scale * (m * g[k] - sum_g - cache.xhat[k] * sum_gx);
                }
            }
        }
        Tensor::from_vec(&cache.shape, gx).expect("gradient shape")
    }
}

/// Inverted dropout. Masks are drawn one uniform per element in element
/// order; `frozen` reuses the previous mask (used by gradient checks).
#[derive(Debug, Clone, PartialEq)]
pub struct Dropout<T> {
    pub rate: f64,
    pub frozen: bool,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64) -> Self {
        Dropout {
            rate,
            frozen: false,
            mask: None,
        }
    }

    pub fn mask(&self) -> Option<&[T]> {
        self.mask.as_deref()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Tensor<T> {
        if mode == Mode::Infer || self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let reuse = self.frozen && self.mask.as_ref().is_some_and(|m| m.len() == x.len());
        if !reuse {
            let keep = T::from_f64(1.0 / (1.0 - self.rate));
            self.mask = Some(
                (0..x.len())
                    .map(|_| if rng.next_f64() < self.rate { T::ZERO } else { keep })
                    .collect(),
            );
        }
        let mask = self.mask.as_ref().expect("mask drawn above");
        let mut y = x.clone();
        for (v, &m) in y.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
        y
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut g = grad.clone();
        if let Some(mask) = &self.mask {
            for (v, &m) in g.data_mut().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Relu {
    active: Vec<bool>,
}

impl Relu {
    pub fn forward<T: Real>(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let mut y = x.clone();
        for v in y.data_mut() {
            if !(*v > T::ZERO) {
                *v = T::ZERO;
            }
        }
        if mode == Mode::Train {
            self.active = x.data().iter().map(|&v| v > T::ZERO).collect();
        }
        y
    }

    pub fn backward<T: Real>(&self, grad: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.active.len(), grad.len(), "{MISSING_CACHE}");
        let mut g = grad.clone();
        for (v, &on) in g.data_mut().iter_mut().zip(&self.active) {
            if !on {
                *v = T::ZERO;
            }
        }
        g
    }

    /// FNV-1a hash of the most recent activation pattern.
    pub fn pattern_hash(&self, mut h: u64) -> u64 {
        for &on in &self.active {
            h ^= on as u64;
            h = h.wrapping_mul(0x100_0000_01B3);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Flatten {
    shape: Vec<usize>,
}

impl Flatten {
    pub fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.shape = x.shape().to_vec();
        x.clone().reshape(&[x.rows(), x.row_len()])
    }

    pub fn backward<T: Real>(&self, grad: &Tensor<T>) -> Tensor<T> {
        grad.clone().reshape(&self.shape).expect(MISSING_CACHE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv1d(Conv1d<T>),
    BatchNorm(BatchNorm<T>),
    Dropout(Dropout<T>),
    Relu(Relu),
    Flatten(Flatten),
}

impl<T: Real> Layer<T> {
    pub fn from_spec(spec: &LayerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match *spec {
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense::new(inputs, outputs)),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => Layer::Conv1d(Conv1d::new(in_channels, out_channels, kernel)),
            LayerSpec::BatchNorm {
                features,
                momentum,
                epsilon,
            } => Layer::BatchNorm(BatchNorm::new(features, momentum, epsilon)),
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate)),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Conv1d(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Dropout(l) => Ok(l.forward(x, mode, rng)),
            Layer::Relu(l) => Ok(l.forward(x, mode)),
            Layer::Flatten(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::Conv1d(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::Dropout(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
        }
    }

    /// Trainable parameters with their local names.
    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Parameter<T>)> {
        match self {
            Layer::Dense(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::Conv1d(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::BatchNorm(l) => vec![("gamma", &mut l.gamma), ("beta", &mut l.beta)],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Parameter<T>)> {
        match self {
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Conv1d(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::BatchNorm(l) => vec![("gamma", &l.gamma), ("beta", &l.beta)],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that inference depends on.
    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::BatchNorm(l) => vec![
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            _ => Vec::new(),
        }
    }

    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm(l) => vec![
                ("running_mean", &l.running_mean),
                ("running_var", &l.running_var),
            ],
            _ => Vec::new(),
        }
    }

    /// Fan-in used for He initialization of this layer's weight, if it has one.
    pub fn fan_in(&self) -> Option<usize> {
        match self {
            Layer::Dense(l) => Some(l.inputs()),
            Layer::Conv1d(l) => {
                let s = l.weight.shape();
                Some(s[1] * s[2])
            }
            _ => None,
        }
    }
}

/// An ordered stack of layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn from_specs(specs: &[LayerSpec]) -> Result<Self> {
        Ok(Sequential {
            layers: specs.iter().map(Layer::from_spec).collect::<Result<_>>()?,
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode, rng)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    /// Parameters named `"{index}.{local}"` in layer order.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params_mut()
                    .into_iter()
                    .map(move |(n, p)| (format!("{i}.{n}"), p))
            })
            .collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Parameter<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params().into_iter().map(move |(n, p)| (format!("{i}.{n}"), p)))
            .collect()
    }

    pub fn named_buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.buffers_mut()
                    .into_iter()
                    .map(move |(n, t)| (format!("{i}.{n}"), t))
            })
            .collect()
    }

    pub fn named_buffers(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.buffers().into_iter().map(move |(n, t)| (format!("{i}.{n}"), t)))
            .collect()
    }

    pub fn set_dropout_frozen(&mut self, frozen: bool) {
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                d.frozen = frozen;
            }
        }
    }

    pub fn activation_hash(&self, mut h: u64) -> u64 {
        for layer in &self.layers {
            if let Layer::Relu(r) = layer {
                h = r.pattern_hash(h);
            }
        }
        h
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn dense_sum_and_identity() {
        let mut d = Dense::<f64>::new(2, 1);
        d.weight.value = t(&[2, 1], &[1.0, 1.0]);
        let y = d.forward(&t(&[1, 2], &[1.0, 2.0]), Mode::Infer).unwrap();
        assert_eq!(y.data(), &[3.0]);

        let mut id = Dense::<f64>::new(3, 3);
        id.weight.value = t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let x = t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, -7.0]);
        assert_eq!(id.forward(&x, Mode::Infer).unwrap(), x);
        assert!(matches!(
            id.forward(&t(&[1, 2], &[1.0, 2.0]), Mode::Infer),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn conv_hand_example_and_delta_kernel() {
        let mut c = Conv1d::<f64>::new(1, 1, 3);
        c.weight.value = t(&[1, 1, 3], &[1.0, 0.0, -1.0]);
        let y = c.forward(&t(&[1, 1, 3], &[1.0, 2.0, 3.0]), Mode::Infer).unwrap();
        assert_eq!(y.data(), &[-2.0, -2.0, 2.0]);

        c.weight.value = t(&[1, 1, 3], &[0.0, 1.0, 0.0]);
        let x = t(&[1, 1, 5], &[4.0, -1.0, 2.5, 0.0, 9.0]);
        assert_eq!(c.forward(&x, Mode::Infer).unwrap().data(), x.data());
    }

    #[test]
    fn conv_preserves_length() {
        for k in [1, 3, 5, 7] {
            let mut c = Conv1d::<f64>::new(2, 3, k);
            let y = c.forward(&Tensor::zeros(&[2, 2, 9]), Mode::Infer).unwrap();
            assert_eq!(y.shape(), &[2, 3, 9]);
        }
        // Kernel wider than the signal.
        let mut c = Conv1d::<f64>::new(1, 1, 7);
        c.weight.value = t(&[1, 1, 7], &[1.0; 7]);
        let y = c.forward(&t(&[1, 1, 2], &[1.0, 2.0]), Mode::Infer).unwrap();
        assert_eq!(y.data(), &[3.0, 3.0]);
    }

    #[test]
    fn batchnorm_train_statistics() {
        let mut bn = BatchNorm::<f64>::new(2, BATCHNORM_MOMENTUM, BATCHNORM_EPSILON);
        let x = t(&[4, 2], &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 45.0]);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..2 {
            let col: Vec<f64> = (0..4).map(|s| y.data()[s * 2 + ch]).collect();
            let mean = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-3, "{var}");
        }
        assert!((bn.running_mean.data()[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_infer_closed_form() {
        let mut bn = BatchNorm::<f64>::new(1, BATCHNORM_MOMENTUM, BATCHNORM_EPSILON);
        let x = t(&[3, 1], &[1.0, -2.0, 0.5]);
        let y = bn.forward(&x, Mode::Infer).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b / (1.0 + BATCHNORM_EPSILON).sqrt());
        }
        assert!(matches!(
            bn.forward(&t(&[1, 1], &[1.0]), Mode::Train),
            Err(Error::BatchTooSmall)
        ));
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = Rng::new(1);
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut d0 = Dropout::<f64>::new(0.0);
        assert_eq!(d0.forward(&x, Mode::Train, &mut rng), x);
        let mut d = Dropout::<f64>::new(0.5);
        assert_eq!(d.forward(&x, Mode::Infer, &mut rng), x);
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = Rng::new(2);
        let n = 1_000_000;
        let x = Tensor::<f64>::from_vec(&[1, n], (0..n).map(|i| (i % 7) as f64).collect()).unwrap();
        let mut d = Dropout::<f64>::new(0.5);
        let y = d.forward(&x, Mode::Train, &mut rng);
        let kept = y.data().iter().zip(x.data()).filter(|(a, b)| **b != 0.0 && **a != 0.0).count();
        let nonzero = x.data().iter().filter(|v| **v != 0.0).count();
        let frac = kept as f64 / nonzero as f64;
        assert!((frac - 0.5).abs() < 0.002, "{frac}");
        let mx = x.data().iter().sum::<f64>() / n as f64;
        let my = y.data().iter().sum::<f64>() / n as f64;
        assert!(((my - mx) / mx).abs() < 0.01);
    }

    #[test]
    fn frozen_dropout_reuses_mask() {
        let mut rng = Rng::new(3);
        let x = Tensor::<f64>::filled(&[4, 8], 1.0);
        let mut d = Dropout::<f64>::new(0.5);
        d.frozen = true;
        let a = d.forward(&x, Mode::Train, &mut rng);
        let b = d.forward(&x, Mode::Train, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs() {
        assert!(LayerSpec::Conv1d { in_channels: 1, out_channels: 1, kernel: 4 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
        assert!(LayerSpec::BatchNorm { features: 2, momentum: 0.9, epsilon: 0.0 }.validate().is_err());
    }
}
