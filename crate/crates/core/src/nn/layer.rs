//! Layer kinds and their forward / backward kernels.
//!
//! Activations are batch-first. Dense layers take `[batch, features]`;
//! convolution and pooling take channels-last images `[batch, H, W, C]`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::{gemm, gemm_nt, gemm_tn};
use crate::{Error, Result, RngState, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Row-wise softmax over a `[batch, classes]` matrix.
    Softmax,
}

/// Fully connected layer: `y = x W + b` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    weight: Tensor,
    bias: Tensor,
}

/// Stride-1 convolution with zero ("same") padding.
///
/// The weight is `[k, k, in_channels, out_channels]`, row-major, which is
/// also the column order of the im2col patch matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    /// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped.
    MaxPool2x2,
    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)` while
    /// training, so frozen networks pass activations through untouched.
    Dropout { rate: f64 },
    Activation(Activation),
    Flatten,
}

fn glorot(rng: &mut RngState, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform(-limit, limit);
    }
    t
}

impl Dense {
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut RngState) -> Self {
        Dense {
            weight: glorot(rng, &[inputs, outputs], inputs, outputs),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::shape("Dense::from_parts", weight.shape(), bias.shape()));
        }
        Ok(Dense { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }
}

impl Conv2d {
    pub fn glorot(kernel: usize, in_channels: usize, out_channels: usize, rng: &mut RngState) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::Config(format!("conv kernel must be odd, got {kernel}")));
        }
        let area = kernel * kernel;
        Ok(Conv2d {
            weight: glorot(
                rng,
                &[kernel, kernel, in_channels, out_channels],
                area * in_channels,
                area * out_channels,
            ),
            bias: Tensor::zeros(&[out_channels]),
        })
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 4 || s[0] != s[1] || s[0] % 2 == 0 || bias.shape() != [s[3]] {
            return Err(Error::shape("Conv2d::from_parts", weight.shape(), bias.shape()));
        }
        Ok(Conv2d { weight, bias })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[3]
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }
}

/// Intermediates a layer keeps for its backward pass.
#[derive(Clone, Debug)]
pub(crate) enum LayerCache {
    Input(Tensor),
    Output(Tensor),
    Conv { patches: Vec<f64>, input_shape: Vec<usize> },
    Pool { argmax: Vec<usize>, input_shape: Vec<usize> },
    Mask(Option<Vec<f64>>),
    Shape(Vec<usize>),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Dropout { .. } => "dropout",
            Layer::Activation(Activation::Relu) => "relu",
            Layer::Activation(Activation::Sigmoid) => "sigmoid",
            Layer::Activation(Activation::Softmax) => "softmax",
            Layer::Flatten => "flatten",
        }
    }

    pub fn dropout(rate: f64) -> Result<Layer> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Layer::Dropout { rate })
    }

    /// Per-example output shape for a per-example input shape.
    pub fn output_shape(&self, input: &[usize]) -> core::result::Result<Vec<usize>, String> {
        match self {
            Layer::Dense(d) => {
                if input != [d.inputs()] {
                    return Err(format!("expects input [{}], got {input:?}", d.inputs()));
                }
                Ok(vec![d.outputs()])
            }
            Layer::Conv2d(c) => match input {
                [h, w, ch] if *ch == c.in_channels() => Ok(vec![*h, *w, c.out_channels()]),
                _ => Err(format!(
                    "expects [H, W, {}], got {input:?}",
                    c.in_channels()
                )),
            },
            Layer::MaxPool2x2 => match input {
                [h, w, c] if *h >= 2 && *w >= 2 => Ok(vec![h / 2, w / 2, *c]),
                _ => Err(format!("expects [H>=2, W>=2, C], got {input:?}")),
            },
            Layer::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok(input.to_vec())
            }
            Layer::Activation(Activation::Softmax) => {
                if input.len() != 1 {
                    return Err(format!("softmax expects a vector per example, got {input:?}"));
                }
                Ok(input.to_vec())
            }
            Layer::Activation(_) => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            _ => Vec::new(),
        }
    }

    /// `training` selects dropout behaviour; `rng` is only consulted by a
    /// training-mode dropout layer with a positive rate.
    pub(crate) fn forward(
        &self,
        x: Tensor,
        training: bool,
        rng: Option<&mut RngState>,
        keep_cache: bool,
    ) -> core::result::Result<(Tensor, Option<LayerCache>), String> {
        match self {
            Layer::Dense(d) => {
                let (b, n_in, n_out) = (x.rows(), d.inputs(), d.outputs());
                let mut out = vec![0.0; b * n_out];
                for row in out.chunks_exact_mut(n_out) {
                    row.copy_from_slice(d.bias.data());
                }
                gemm(x.data(), d.weight.data(), &mut out, b, n_in, n_out);
                let y = Tensor::new(vec![b, n_out], out).map_err(|e| format!("{e}"))?;
                Ok((y, keep_cache.then(|| LayerCache::Input(x))))
            }
            Layer::Conv2d(c) => {
                let s = x.shape().to_vec();
                let (b, h, w) = (s[0], s[1], s[2]);
                let patches = im2col(x.data(), b, h, w, c.in_channels(), c.kernel());
                let rows = b * h * w;
                let cols = c.kernel() * c.kernel() * c.in_channels();
                let n_out = c.out_channels();
                let mut out = vec![0.0; rows * n_out];
                for row in out.chunks_exact_mut(n_out) {
                    row.copy_from_slice(c.bias.data());
                }
                gemm(&patches, c.weight.data(), &mut out, rows, cols, n_out);
                let y = Tensor::new(vec![b, h, w, n_out], out).map_err(|e| format!("{e}"))?;
                Ok((
                    y,
                    keep_cache.then_some(LayerCache::Conv {
                        patches,
                        input_shape: s,
                    }),
                ))
            }
            Layer::MaxPool2x2 => {
                let s = x.shape().to_vec();
                let (b, h, w, ch) = (s[0], s[1], s[2], s[3]);
                let (oh, ow) = (h / 2, w / 2);
                let src = x.data();
                let mut out = Vec::with_capacity(b * oh * ow * ch);
                let mut argmax = Vec::with_capacity(b * oh * ow * ch);
                for bi in 0..b {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for c in 0..ch {
                                let mut best = ((bi * h + 2 * oy) * w + 2 * ox) * ch + c;
                                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                    let idx = ((bi * h + 2 * oy + dy) * w + 2 * ox + dx) * ch + c;
                                    if src[idx] > src[best] {
                                        best = idx;
                                    }
                                }
                                out.push(src[best]);
                                argmax.push(best);
                            }
                        }
                    }
                }
                let y = Tensor::new(vec![b, oh, ow, ch], out).map_err(|e| format!("{e}"))?;
                Ok((
                    y,
                    keep_cache.then_some(LayerCache::Pool {
                        argmax,
                        input_shape: s,
                    }),
                ))
            }
            Layer::Dropout { rate } => {
                if !training || *rate == 0.0 {
                    return Ok((x, keep_cache.then_some(LayerCache::Mask(None))));
                }
                let rng = rng.ok_or_else(|| {
                    String::from("training-mode dropout needs an RngState")
                })?;
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.uniform01() < *rate { 0.0 } else { keep })
                    .collect();
                let mut y = x;
                for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Ok((y, keep_cache.then_some(LayerCache::Mask(Some(mask)))))
            }
            Layer::Activation(Activation::Relu) => {
                let y = x.map(|v| if v > 0.0 { v } else { 0.0 });
                Ok((y, keep_cache.then_some(LayerCache::Input(x))))
            }
            Layer::Activation(Activation::Sigmoid) => {
                let y = x.map(math::sigmoid);
                let cache = keep_cache.then(|| LayerCache::Output(y.clone()));
                Ok((y, cache))
            }
            Layer::Activation(Activation::Softmax) => {
                let y = softmax_rows(&x);
                let cache = keep_cache.then(|| LayerCache::Output(y.clone()));
                Ok((y, cache))
            }
            Layer::Flatten => {
                let s = x.shape().to_vec();
                let b = s[0];
                let width = x.row_len();
                let y = x.reshape(&[b, width]).map_err(|e| format!("{e}"))?;
                Ok((y, keep_cache.then_some(LayerCache::Shape(s))))
            }
        }
    }

    /// Returns parameter gradients (same order as [`Layer::params`]) and, when
    /// `input_grad` is set, the gradient with respect to the layer input.
    pub(crate) fn backward(
        &self,
        cache: &LayerCache,
        dy: &Tensor,
        input_grad: bool,
    ) -> core::result::Result<(Vec<Tensor>, Option<Tensor>), String> {
        let bad_cache = || String::from("cache does not belong to this layer");
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Input(x)) => {
                let (b, n_in, n_out) = (x.rows(), d.inputs(), d.outputs());
                let mut dw = vec![0.0; n_in * n_out];
                gemm_tn(x.data(), dy.data(), &mut dw, b, n_in, n_out);
                let mut db = vec![0.0; n_out];
                for row in dy.data().chunks_exact(n_out) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                let dx = input_grad.then(|| {
                    let mut dx = vec![0.0; b * n_in];
                    gemm_nt(dy.data(), d.weight.data(), &mut dx, b, n_out, n_in);
                    Tensor::new(vec![b, n_in], dx).expect("dense dx shape")
                });
                Ok((
                    vec![
                        Tensor::new(vec![n_in, n_out], dw).expect("dense dW shape"),
                        Tensor::new(vec![n_out], db).expect("dense db shape"),
                    ],
                    dx,
                ))
            }
            (Layer::Conv2d(c), LayerCache::Conv { patches, input_shape }) => {
                let (b, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
                let k = c.kernel();
                let cols = k * k * c.in_channels();
                let rows = b * h * w;
                let n_out = c.out_channels();
                let mut dw = vec![0.0; cols * n_out];
                gemm_tn(patches, dy.data(), &mut dw, rows, cols, n_out);
                let mut db = vec![0.0; n_out];
                for row in dy.data().chunks_exact(n_out) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                let dx = input_grad.then(|| {
                    let mut dpatches = vec![0.0; rows * cols];
                    gemm_nt(dy.data(), c.weight.data(), &mut dpatches, rows, n_out, cols);
                    let dx = col2im(&dpatches, b, h, w, c.in_channels(), k);
                    Tensor::new(input_shape.clone(), dx).expect("conv dx shape")
                });
                Ok((
                    vec![
                        Tensor::new(c.weight.shape().to_vec(), dw).expect("conv dW shape"),
                        Tensor::new(vec![n_out], db).expect("conv db shape"),
                    ],
                    dx,
                ))
            }
            (Layer::MaxPool2x2, LayerCache::Pool { argmax, input_shape }) => {
                let mut dx = Tensor::zeros(input_shape);
                let d = dx.data_mut();
                for (&idx, &g) in argmax.iter().zip(dy.data()) {
                    d[idx] += g;
                }
                Ok((Vec::new(), Some(dx)))
            }
            (Layer::Dropout { .. }, LayerCache::Mask(mask)) => {
                let dx = match mask {
                    None => dy.clone(),
                    Some(m) => {
                        let mut dx = dy.clone();
                        for (v, s) in dx.data_mut().iter_mut().zip(m) {
                            *v *= s;
                        }
                        dx
                    }
                };
                Ok((Vec::new(), Some(dx)))
            }
            (Layer::Activation(Activation::Relu), LayerCache::Input(x)) => {
                let dx = dy
                    .zip(x, |g, v| if v > 0.0 { g } else { 0.0 })
                    .map_err(|e| format!("{e}"))?;
                Ok((Vec::new(), Some(dx)))
            }
            (Layer::Activation(Activation::Sigmoid), LayerCache::Output(s)) => {
                let dx = dy
                    .zip(s, |g, v| g * v * (1.0 - v))
                    .map_err(|e| format!("{e}"))?;
                Ok((Vec::new(), Some(dx)))
            }
            (Layer::Activation(Activation::Softmax), LayerCache::Output(s)) => {
                let n = s.row_len();
                let mut dx = dy.clone();
                for (grow, srow) in dx.data_mut().chunks_exact_mut(n).zip(s.data().chunks_exact(n)) {
                    let dot: f64 = grow.iter().zip(srow).map(|(g, p)| g * p).sum();
                    for (g, p) in grow.iter_mut().zip(srow) {
                        *g = p * (*g - dot);
                    }
                }
                Ok((Vec::new(), Some(dx)))
            }
            (Layer::Flatten, LayerCache::Shape(s)) => {
                let dx = dy.clone().reshape(s).map_err(|e| format!("{e}"))?;
                Ok((Vec::new(), Some(dx)))
            }
            _ => Err(bad_cache()),
        }
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let n = x.row_len().max(1);
    let mut y = x.clone();
    if x.rank() <= 1 {
        softmax_slice(y.data_mut());
        return y;
    }
    for row in y.data_mut().chunks_exact_mut(n) {
        softmax_slice(row);
    }
    y
}

fn softmax_slice(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn im2col(src: &[f64], b: usize, h: usize, w: usize, ch: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let cols = k * k * ch;
    let mut out = vec![0.0; b * h * w * cols];
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                let row = ((bi * h + y) * w + x) * cols;
                for dy in 0..k {
                    let iy = y + dy;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let iy = iy - pad;
                    for dx in 0..k {
                        let ix = x + dx;
                        if ix < pad || ix - pad >= w {
                            continue;
                        }
                        let ix = ix - pad;
                        let from = ((bi * h + iy) * w + ix) * ch;
                        let to = row + (dy * k + dx) * ch;
                        out[to..to + ch].copy_from_slice(&src[from..from + ch]);
                    }
                }
            }
        }
    }
    out
}

fn col2im(dpatches: &[f64], b: usize, h: usize, w: usize, ch: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let cols = k * k * ch;
    let mut dx = vec![0.0; b * h * w * ch];
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                let row = ((bi * h + y) * w + x) * cols;
                for dy in 0..k {
                    let iy = y + dy;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let iy = iy - pad;
                    for dxk in 0..k {
                        let ix = x + dxk;
                        if ix < pad || ix - pad >= w {
                            continue;
                        }
                        let ix = ix - pad;
                        let to = ((bi * h + iy) * w + ix) * ch;
                        let from = row + (dy * k + dxk) * ch;
                        for c in 0..ch {
                            dx[to + c] += dpatches[from + c];
                        }
                    }
                }
            }
        }
    }
    dx
}
