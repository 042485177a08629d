//! The shared-feature mapping network.
//!
//! A [`MappingModel`] is an encoder–decoder regression from a dataset's
//! shared (common) encoded columns to *all* of its encoded columns. It comes
//! in two variants:
//!
//! - [`Variant::Ae`]: the last encoder step is a dense + ReLU layer like the
//!   ones before it, and generation is a pure function;
//! - [`Variant::Vae`]: the encoder output splits into a mean head and a
//!   log-variance head, and the latent code is drawn as
//!   `z = mu + exp(log_var / 2) * eps` with `eps ~ N(0, I)`.
//!
//! Hidden layers use ReLU and the output layer is a sigmoid, because every
//! target column is min-max or one-hot encoded into `[0, 1]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::nn::{
    adam_step, compute_loss, relative_error, Activation, AdamState, Dense, ForwardCache, Layer, LossKind, Network,
    TrainConfig, FD_STEP,
};
use crate::{Error, Result, RngState, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Ae,
    Vae,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ae => "ae",
            Variant::Vae => "vae",
        }
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ae" => Ok(Variant::Ae),
            "vae" => Ok(Variant::Vae),
            other => Err(Error::Config(format!("unknown mapping variant `{other}`"))),
        }
    }
}

/// How a frozen VAE produces its latent code at generation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Draw `z` through the reparameterisation, so repeated calls differ.
    Sample,
    /// Use `z = mu`; deterministic.
    MeanOnly,
}

impl core::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Sampling::Sample),
            "mean_only" => Ok(Sampling::MeanOnly),
            other => Err(Error::Config(format!("unknown sampling mode `{other}`"))),
        }
    }
}

/// Architecture of a mapping network.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingSpec {
    pub variant: Variant,
    pub input_width: usize,
    pub output_width: usize,
    /// Encoder hidden widths; the decoder mirrors them in reverse.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl MappingSpec {
    /// Latent width `max(8, input / 2)` and one hidden layer of
    /// `max(64, 2 * latent)` units on each side.
    pub fn with_defaults(variant: Variant, input_width: usize, output_width: usize) -> Self {
        let latent_dim = (input_width / 2).max(8);
        MappingSpec {
            variant,
            input_width,
            output_width,
            hidden: vec![(2 * latent_dim).max(64)],
            latent_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Heads {
    /// Dense + ReLU to the latent width.
    Ae(Network),
    Vae { mu: Network, log_var: Network },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappingModel {
    variant: Variant,
    encoder: Network,
    heads: Heads,
    decoder: Network,
    input_width: usize,
    output_width: usize,
    latent_dim: usize,
    beta: f64,
    frozen: bool,
}

/// The latent draw of one batch; `eps` is kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub mu: Tensor,
    pub log_var: Tensor,
    pub z: Tensor,
    pub eps: Tensor,
}

/// `z = mu + exp(log_var / 2) * eps` with `eps` drawn row-major from `rng`.
pub fn reparameterize(mu: &Tensor, log_var: &Tensor, rng: &mut RngState) -> Result<LatentSample> {
    let eps = rng.standard_normal(mu.shape());
    reparameterize_with(mu, log_var, eps)
}

/// Reparameterisation with a caller-supplied noise tensor.
pub fn reparameterize_with(mu: &Tensor, log_var: &Tensor, eps: Tensor) -> Result<LatentSample> {
    if mu.shape() != log_var.shape() {
        return Err(Error::shape("reparameterize", mu.shape(), log_var.shape()));
    }
    if eps.shape() != mu.shape() {
        return Err(Error::shape("reparameterize", mu.shape(), eps.shape()));
    }
    let sigma = log_var.map(|lv| math::exp(0.5 * lv));
    let z = mu.zip(&sigma.zip(&eps, |s, e| s * e)?, |m, se| m + se)?;
    Ok(LatentSample {
        mu: mu.clone(),
        log_var: log_var.clone(),
        z,
        eps,
    })
}

/// KL divergence of `N(mu, exp(log_var))` from `N(0, I)`: summed over the
/// latent axis and averaged over the batch.
pub fn kl_loss(mu: &Tensor, log_var: &Tensor) -> Result<f64> {
    if mu.shape() != log_var.shape() {
        return Err(Error::shape("kl_loss", mu.shape(), log_var.shape()));
    }
    let batch = mu.rows().max(1) as f64;
    let total: f64 = mu
        .data()
        .iter()
        .zip(log_var.data())
        // exp(lv) - 1 - lv >= 0; expm1 keeps it accurate near lv = 0.
        .map(|(&m, &lv)| 0.5 * (m * m + (math::expm1(lv) - lv).max(0.0)))
        .sum();
    Ok(total / batch)
}

fn kl_grads(mu: &Tensor, log_var: &Tensor) -> (Tensor, Tensor) {
    let batch = mu.rows().max(1) as f64;
    (
        mu.scale(1.0 / batch),
        log_var.map(|lv| 0.5 * math::expm1(lv) / batch),
    )
}

struct Trace {
    encoder: ForwardCache,
    heads: HeadTrace,
    decoder: ForwardCache,
}

enum HeadTrace {
    Ae(ForwardCache),
    Vae {
        mu: ForwardCache,
        log_var: ForwardCache,
        sample: LatentSample,
    },
}

/// Per-epoch training curves of [`fit_mapping`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitHistory {
    /// Reconstruction + beta * KL.
    pub loss: Vec<f64>,
    pub reconstruction: Vec<f64>,
    /// Always zero for the AE variant.
    pub kl: Vec<f64>,
    pub validation: Vec<f64>,
}

/// Builds an untrained model with seeded Glorot-uniform weights.
pub fn build_mapping(spec: &MappingSpec, rng: &mut RngState) -> Result<MappingModel> {
    if spec.input_width == 0 || spec.output_width == 0 || spec.latent_dim == 0 {
        return Err(Error::Config(format!(
            "mapping widths must be positive: input {}, output {}, latent {}",
            spec.input_width, spec.output_width, spec.latent_dim
        )));
    }
    if let Some(0) = spec.hidden.iter().copied().find(|&h| h == 0) {
        return Err(Error::Config("hidden layer widths must be positive".into()));
    }
    if spec.latent_dim >= spec.input_width {
        log::warn!(
            "event=wide_latent latent_dim={} input_width={}",
            spec.latent_dim,
            spec.input_width
        );
    }

    let mut enc_layers = Vec::new();
    let mut width = spec.input_width;
    for &h in &spec.hidden {
        enc_layers.push(Layer::Dense(Dense::glorot(width, h, rng)));
        enc_layers.push(Layer::Activation(Activation::Relu));
        width = h;
    }
    let encoder = Network::new(&[spec.input_width], enc_layers)?;

    let heads = match spec.variant {
        Variant::Ae => Heads::Ae(Network::new(
            &[width],
            vec![
                Layer::Dense(Dense::glorot(width, spec.latent_dim, rng)),
                Layer::Activation(Activation::Relu),
            ],
        )?),
        Variant::Vae => Heads::Vae {
            mu: Network::new(&[width], vec![Layer::Dense(Dense::glorot(width, spec.latent_dim, rng))])?,
            log_var: Network::new(&[width], vec![Layer::Dense(Dense::glorot(width, spec.latent_dim, rng))])?,
        },
    };

    let mut dec_layers = Vec::new();
    let mut width = spec.latent_dim;
    for &h in spec.hidden.iter().rev() {
        dec_layers.push(Layer::Dense(Dense::glorot(width, h, rng)));
        dec_layers.push(Layer::Activation(Activation::Relu));
        width = h;
    }
    dec_layers.push(Layer::Dense(Dense::glorot(width, spec.output_width, rng)));
    dec_layers.push(Layer::Activation(Activation::Sigmoid));
    let decoder = Network::new(&[spec.latent_dim], dec_layers)?;

    Ok(MappingModel {
        variant: spec.variant,
        encoder,
        heads,
        decoder,
        input_width: spec.input_width,
        output_width: spec.output_width,
        latent_dim: spec.latent_dim,
        beta: 1.0,
        frozen: false,
    })
}

impl MappingModel {
    /// Reassembles a model from its parts (used by model files).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        variant: Variant,
        encoder: Network,
        ae_head: Option<Network>,
        vae_heads: Option<(Network, Network)>,
        decoder: Network,
        beta: f64,
        frozen: bool,
    ) -> Result<Self> {
        let heads = match (variant, ae_head, vae_heads) {
            (Variant::Ae, Some(h), None) => Heads::Ae(h),
            (Variant::Vae, None, Some((mu, log_var))) => Heads::Vae { mu, log_var },
            _ => {
                return Err(Error::Consistency(format!(
                    "{} model needs exactly its own latent heads",
                    variant.name()
                )))
            }
        };
        let input_width = encoder.input_shape().iter().product();
        let hidden: usize = encoder.output_shape().iter().product();
        let latent_dim = decoder.input_shape().iter().product();
        let output_width = decoder.output_shape().iter().product();
        let head_nets: Vec<&Network> = match &heads {
            Heads::Ae(h) => vec![h],
            Heads::Vae { mu, log_var } => vec![mu, log_var],
        };
        for h in head_nets {
            if h.input_shape() != [hidden] || h.output_shape() != [latent_dim] {
                return Err(Error::Consistency(format!(
                    "latent head maps {:?} -> {:?}, expected [{hidden}] -> [{latent_dim}]",
                    h.input_shape(),
                    h.output_shape()
                )));
            }
        }
        let mut model = MappingModel {
            variant,
            encoder,
            heads,
            decoder,
            input_width,
            output_width,
            latent_dim,
            beta,
            frozen: false,
        };
        if frozen {
            model = model.freeze();
        }
        Ok(model)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    /// `[latent]` for the AE variant, `[mu, log_var]` for the VAE.
    pub fn heads(&self) -> Vec<&Network> {
        match &self.heads {
            Heads::Ae(h) => vec![h],
            Heads::Vae { mu, log_var } => vec![mu, log_var],
        }
    }

    /// Widths along the main path, e.g. `[27, 64, 16, 64, 78]`.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.input_width];
        let dense_outputs = |net: &Network, out: &mut Vec<usize>| {
            for l in net.layers() {
                if let Layer::Dense(d) = l {
                    out.push(d.outputs());
                }
            }
        };
        dense_outputs(&self.encoder, &mut widths);
        widths.push(self.latent_dim);
        dense_outputs(&self.decoder, &mut widths);
        widths
    }

    pub fn latent_exceeds_input(&self) -> bool {
        self.latent_dim >= self.input_width
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.params();
        for h in self.heads() {
            p.extend(h.params());
        }
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.params_mut();
        match &mut self.heads {
            Heads::Ae(h) => p.extend(h.params_mut()),
            Heads::Vae { mu, log_var } => {
                p.extend(mu.params_mut());
                p.extend(log_var.params_mut());
            }
        }
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn freeze(mut self) -> Self {
        self.encoder = self.encoder.freeze();
        self.decoder = self.decoder.freeze();
        self.heads = match self.heads {
            Heads::Ae(h) => Heads::Ae(h.freeze()),
            Heads::Vae { mu, log_var } => Heads::Vae {
                mu: mu.freeze(),
                log_var: log_var.freeze(),
            },
        };
        self.frozen = true;
        self
    }

    fn trace(&self, x: &Tensor, noise: Noise<'_>) -> Result<(Tensor, Trace)> {
        let (h, encoder) = self.encoder.forward(x, None)?;
        let (z, heads) = match &self.heads {
            Heads::Ae(head) => {
                let (z, c) = head.forward(&h, None)?;
                (z, HeadTrace::Ae(c))
            }
            Heads::Vae { mu, log_var } => {
                let (m, mc) = mu.forward(&h, None)?;
                let (lv, lc) = log_var.forward(&h, None)?;
                let sample = match noise {
                    Noise::Draw(rng) => reparameterize(&m, &lv, rng)?,
                    Noise::Fixed(eps) => reparameterize_with(&m, &lv, eps.clone())?,
                };
                (
                    sample.z.clone(),
                    HeadTrace::Vae {
                        mu: mc,
                        log_var: lc,
                        sample,
                    },
                )
            }
        };
        let (out, decoder) = self.decoder.forward(&z, None)?;
        Ok((out, Trace { encoder, heads, decoder }))
    }

    /// Gradients of `loss(out) + beta * KL` in [`MappingModel::params`] order.
    fn backprop(&self, trace: &Trace, d_out: &Tensor, beta: f64, input_grad: bool) -> Result<(Vec<Tensor>, Option<Tensor>)> {
        let (dec_grads, dz) = self.decoder.backward(&trace.decoder, d_out)?;
        let (head_grads, dh) = match (&self.heads, &trace.heads) {
            (Heads::Ae(head), HeadTrace::Ae(c)) => {
                let (g, dh) = head.backward(c, &dz)?;
                (g.flatten(), dh)
            }
            (Heads::Vae { mu, log_var }, HeadTrace::Vae { mu: mc, log_var: lc, sample }) => {
                let (dkl_mu, dkl_lv) = kl_grads(&sample.mu, &sample.log_var);
                let dmu = dz.zip(&dkl_mu, |a, b| a + beta * b)?;
                // dz/dlog_var = exp(log_var / 2) * eps / 2
                let dz_dlv = sample
                    .log_var
                    .zip(&sample.eps, |lv, e| 0.5 * math::exp(0.5 * lv) * e)?;
                let dlv = dz
                    .zip(&dz_dlv, |a, b| a * b)?
                    .zip(&dkl_lv, |a, b| a + beta * b)?;
                let (gm, dh_mu) = mu.backward(mc, &dmu)?;
                let (gl, dh_lv) = log_var.backward(lc, &dlv)?;
                let mut g = gm.flatten();
                g.extend(gl.flatten());
                (g, dh_mu.add(&dh_lv)?)
            }
            _ => return Err(Error::Consistency("trace does not match model variant".into())),
        };
        let (enc_grads, dx) = self.encoder.backward_inner(&trace.encoder, &dh, input_grad)?;
        let mut grads = enc_grads.flatten();
        grads.extend(head_grads);
        grads.extend(dec_grads.flatten());
        Ok((grads, dx))
    }

    /// Objective value and its parameter gradients for one batch.
    fn objective(&self, x: &Tensor, y: &Tensor, kind: LossKind, beta: f64, noise: Noise<'_>) -> Result<Objective> {
        let (out, trace) = self.trace(x, noise)?;
        let (recon, d_out) = compute_loss(kind, &out, y)?;
        let kl = match &trace.heads {
            HeadTrace::Vae { sample, .. } => kl_loss(&sample.mu, &sample.log_var)?,
            HeadTrace::Ae(_) => 0.0,
        };
        Ok(Objective {
            recon,
            kl,
            total: recon + beta * kl,
            trace,
            d_out,
        })
    }

    fn encode_latent(&self, x: &Tensor, rng: &mut RngState, sampling: Sampling) -> Result<Tensor> {
        let h = self.encoder.predict(x)?;
        match &self.heads {
            Heads::Ae(head) => head.predict(&h),
            Heads::Vae { mu, log_var } => {
                let m = mu.predict(&h)?;
                match sampling {
                    Sampling::MeanOnly => Ok(m),
                    Sampling::Sample => {
                        let lv = log_var.predict(&h)?;
                        Ok(reparameterize(&m, &lv, rng)?.z)
                    }
                }
            }
        }
    }
}

enum Noise<'a> {
    Draw(&'a mut RngState),
    Fixed(&'a Tensor),
}

struct Objective {
    recon: f64,
    kl: f64,
    total: f64,
    trace: Trace,
    d_out: Tensor,
}

fn check_unit_interval(t: &Tensor, what: &str) -> Result<()> {
    if let Some(v) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("{what} value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Trains `model` to map `x_common` to `y_full` with loss
/// `reconstruction + beta * KL` (`beta` is ignored by the AE variant), and
/// returns it frozen.
pub fn fit_mapping(
    mut model: MappingModel,
    x_common: &Tensor,
    y_full: &Tensor,
    cfg: &TrainConfig,
    beta: f64,
    rng: &mut RngState,
) -> Result<(MappingModel, FitHistory)> {
    if model.frozen {
        return Err(Error::Usage("mapping model is already frozen".into()));
    }
    if x_common.rows() != y_full.rows() {
        return Err(Error::shape("fit_mapping", x_common.shape(), y_full.shape()));
    }
    if x_common.shape() != [x_common.rows(), model.input_width] {
        return Err(Error::shape("fit_mapping input", x_common.shape(), &[x_common.rows(), model.input_width]));
    }
    if y_full.shape() != [y_full.rows(), model.output_width] {
        return Err(Error::shape("fit_mapping target", y_full.shape(), &[y_full.rows(), model.output_width]));
    }
    if cfg.loss == LossKind::SoftmaxCe {
        return Err(Error::Config("mapping reconstruction loss must be mse or bce".into()));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be a non-negative number, got {beta}")));
    }
    check_unit_interval(x_common, "common feature")?;
    check_unit_interval(y_full, "target feature")?;
    let beta = if model.variant == Variant::Ae { 0.0 } else { beta };
    model.beta = beta;

    let mut history = FitHistory::default();
    if cfg.epochs == 0 {
        return Ok((model.freeze(), history));
    }
    let (train_idx, val_idx) = crate::nn::split_validation(x_common.rows(), cfg.validation_fraction, rng);
    cfg.validate(train_idx.len())?;
    let adam = cfg.adam();
    let mut state = AdamState::new();

    for epoch in 1..=cfg.epochs {
        let order = rng.permutation(train_idx.len());
        let (mut total, mut recon, mut kl) = (0.0, 0.0, 0.0);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let rows: Vec<usize> = chunk.iter().map(|&i| train_idx[i]).collect();
            let x = x_common.select_rows(&rows);
            let y = y_full.select_rows(&rows);
            let obj = model.objective(&x, &y, cfg.loss, beta, Noise::Draw(rng))?;
            if !obj.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch + 1,
                    loss: obj.total,
                });
            }
            let n = rows.len() as f64;
            total += obj.total * n;
            recon += obj.recon * n;
            kl += obj.kl * n;
            let (grads, _) = model.backprop(&obj.trace, &obj.d_out, beta, false)?;
            let mut params = model.params_mut();
            adam_step(&mut params, &grads, &mut state, &adam)?;
        }
        let n = train_idx.len() as f64;
        history.loss.push(total / n);
        history.reconstruction.push(recon / n);
        history.kl.push(kl / n);
        if !val_idx.is_empty() {
            let x = x_common.select_rows(&val_idx);
            let y = y_full.select_rows(&val_idx);
            let obj = model.objective(&x, &y, cfg.loss, beta, Noise::Draw(rng))?;
            history.validation.push(obj.total);
        }
        log::debug!("event=mapping_epoch epoch={} loss={}", epoch, total / n);
    }
    Ok((model.freeze(), history))
}

/// Synthesizes full-width rows from common-feature rows with a frozen model.
pub fn generate_features(
    model: &MappingModel,
    x_common: &Tensor,
    rng: &mut RngState,
    sampling: Sampling,
) -> Result<Tensor> {
    if !model.frozen {
        return Err(Error::Usage("generate_features needs a frozen mapping model".into()));
    }
    if x_common.rank() != 2 || x_common.shape()[1] != model.input_width {
        return Err(Error::shape(
            "generate_features",
            x_common.shape(),
            &[x_common.rows(), model.input_width],
        ));
    }
    let z = model.encode_latent(x_common, rng, sampling)?;
    model.decoder.predict(&z)
}

/// Finite-difference check of the full mapping objective (reconstruction
/// plus `beta * KL`) with the reparameterisation noise held fixed. Returns
/// the worst relative error over all parameters.
pub fn mapping_grad_check(
    model: &MappingModel,
    x: &Tensor,
    y: &Tensor,
    kind: LossKind,
    beta: f64,
    eps: &Tensor,
) -> Result<f64> {
    let obj = model.objective(x, y, kind, beta, Noise::Fixed(eps))?;
    let (analytic, _) = model.backprop(&obj.trace, &obj.d_out, beta, false)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for p in 0..analytic.len() {
        for i in 0..analytic[p].len() {
            let orig = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = orig + FD_STEP;
            let plus = probe.objective(x, y, kind, beta, Noise::Fixed(eps))?.total;
            probe.params_mut()[p].data_mut()[i] = orig - FD_STEP;
            let minus = probe.objective(x, y, kind, beta, Noise::Fixed(eps))?.total;
            probe.params_mut()[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[p].data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ae_shapes_follow_hidden_spec() {
        let spec = MappingSpec {
            variant: Variant::Ae,
            input_width: 27,
            output_width: 78,
            hidden: vec![64],
            latent_dim: 16,
        };
        let m = build_mapping(&spec, &mut RngState::new(0)).unwrap();
        assert_eq!(m.layer_widths(), vec![27, 64, 16, 64, 78]);
        assert_eq!(m.heads().len(), 1);
        assert!(!m.is_frozen());

        let v = build_mapping(&MappingSpec { variant: Variant::Vae, ..spec }, &mut RngState::new(0)).unwrap();
        assert_eq!(v.layer_widths(), vec![27, 64, 16, 64, 78]);
        let heads = v.heads();
        assert_eq!(heads.len(), 2);
        for h in heads {
            assert_eq!(h.input_shape(), &[64]);
            assert_eq!(h.output_shape(), &[16]);
        }
    }

    #[test]
    fn equal_widths_and_wide_latent_are_legal() {
        let spec = MappingSpec {
            variant: Variant::Ae,
            input_width: 6,
            output_width: 6,
            hidden: vec![8],
            latent_dim: 6,
        };
        let m = build_mapping(&spec, &mut RngState::new(1)).unwrap();
        assert!(m.latent_exceeds_input());
        assert_eq!(m.output_width(), 6);
    }

    #[test]
    fn default_spec_sizes() {
        let s = MappingSpec::with_defaults(Variant::Ae, 27, 78);
        assert_eq!(s.latent_dim, 13);
        assert_eq!(s.hidden, vec![64]);
        let s = MappingSpec::with_defaults(Variant::Vae, 224, 504);
        assert_eq!(s.latent_dim, 112);
        assert_eq!(s.hidden, vec![224]);
        assert_eq!(MappingSpec::with_defaults(Variant::Ae, 4, 9).latent_dim, 8);
    }

    #[test]
    fn reparameterize_edge_cases() {
        let mut rng = RngState::new(2);
        let mu = rng.standard_normal(&[3, 4]);
        let lv = rng.standard_normal(&[3, 4]);
        let s = reparameterize_with(&mu, &lv, Tensor::zeros(&[3, 4])).unwrap();
        assert_eq!(s.z, mu);

        let tiny = Tensor::full(&[3, 4], -50.0);
        let s = reparameterize(&mu, &tiny, &mut rng).unwrap();
        for (z, m) in s.z.data().iter().zip(mu.data()) {
            assert!((z - m).abs() < 1e-10);
        }
        assert!(reparameterize(&mu, &Tensor::zeros(&[4, 3]), &mut rng).is_err());
    }

    #[test]
    fn reparameterized_variance_is_one() {
        let n = 100_000;
        let s = reparameterize(&Tensor::zeros(&[n, 1]), &Tensor::zeros(&[n, 1]), &mut RngState::new(31)).unwrap();
        let mean = s.z.sum() / n as f64;
        let var = s.z.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((0.98..=1.02).contains(&var), "variance {var}");
    }

    #[test]
    fn reparameterization_gradients_match_finite_differences() {
        let mut rng = RngState::new(5);
        for _ in 0..20 {
            let mu = rng.normal();
            let lv = rng.normal();
            let eps = rng.normal();
            let z = |m: f64, l: f64| m + math::exp(0.5 * l) * eps;
            let h = FD_STEP;
            let dmu = (z(mu + h, lv) - z(mu - h, lv)) / (2.0 * h);
            let dlv = (z(mu, lv + h) - z(mu, lv - h)) / (2.0 * h);
            assert!((dmu - 1.0).abs() < 1e-9);
            let analytic = 0.5 * math::exp(0.5 * lv) * eps;
            assert!(relative_error(analytic, dlv) < 1e-7);
        }
    }

    #[test]
    fn kl_closed_forms() {
        let z = Tensor::zeros(&[1, 1]);
        assert_eq!(kl_loss(&z, &z).unwrap(), 0.0);
        let one = Tensor::full(&[1, 1], 1.0);
        assert!((kl_loss(&one, &z).unwrap() - 0.5).abs() < 1e-12);
        // sigma^2 = 4: (4 - 1 - ln 4) / 2
        let lv = Tensor::full(&[1, 1], 4f64.ln());
        let expected = 0.5 * (4.0 - 1.0 - 4f64.ln());
        assert!((kl_loss(&z, &lv).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.8069).abs() < 1e-4);
        // per dimension, averaged over the batch
        let ones = Tensor::full(&[4, 3], 1.0);
        assert!((kl_loss(&ones, &Tensor::zeros(&[4, 3])).unwrap() - 1.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(mu in proptest::collection::vec(-30.0f64..30.0, 1..12),
                              lv in proptest::collection::vec(-30.0f64..30.0, 1..12)) {
            let n = mu.len().min(lv.len());
            let m = Tensor::new(vec![1, n], mu[..n].to_vec()).unwrap();
            let l = Tensor::new(vec![1, n], lv[..n].to_vec()).unwrap();
            prop_assert!(kl_loss(&m, &l).unwrap() >= 0.0);
        }
    }

    fn identity_fixture() -> Tensor {
        RngState::new(2).uniform_tensor(&[32, 8])
    }

    /// Identity fixture at the default spec and default optimiser settings.
    pub(crate) fn fit_identity(variant: Variant, beta: f64) -> (MappingModel, FitHistory, Tensor) {
        let x = identity_fixture();
        let spec = MappingSpec::with_defaults(variant, 8, 8);
        let m = build_mapping(&spec, &mut RngState::new(0)).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            ..TrainConfig::default()
        };
        let (f, h) = fit_mapping(m, &x, &x, &cfg, beta, &mut RngState::new(1)).unwrap();
        (f, h, x)
    }

    #[test]
    fn ae_learns_identity_fixture() {
        let (model, hist, x) = fit_identity(Variant::Ae, 1.0);
        let last = *hist.reconstruction.last().unwrap();
        assert!(last < 1e-2, "final mse {last}");
        let y = generate_features(&model, &x, &mut RngState::new(0), Sampling::Sample).unwrap();
        for j in 0..8 {
            let mae = (0..32).map(|i| (y.get2(i, j) - x.get2(i, j)).abs()).sum::<f64>() / 32.0;
            assert!(mae < 0.1, "feature {j} mae {mae}");
        }
    }

    #[test]
    fn beta_zero_vae_learns_identity_fixture() {
        let (_, hist, _) = fit_identity(Variant::Vae, 0.0);
        let last = *hist.reconstruction.last().unwrap();
        assert!(last < 5e-2, "final mse {last}");
        assert!(hist.kl.iter().all(|k| *k >= 0.0));
    }

    #[test]
    fn zero_epochs_freezes_initialisation() {
        let x = identity_fixture();
        let spec = MappingSpec::with_defaults(Variant::Ae, 8, 8);
        let m = build_mapping(&spec, &mut RngState::new(0)).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (f, hist) = fit_mapping(m.clone(), &x, &x, &cfg, 1.0, &mut RngState::new(0)).unwrap();
        assert!(hist.loss.is_empty());
        assert!(f.is_frozen());
        assert_eq!(f.params(), m.params());
    }

    #[test]
    fn generation_requires_frozen_model_and_right_width() {
        let m = build_mapping(&MappingSpec::with_defaults(Variant::Vae, 8, 8), &mut RngState::new(0)).unwrap();
        let x = identity_fixture();
        assert!(matches!(
            generate_features(&m, &x, &mut RngState::new(0), Sampling::Sample),
            Err(Error::Usage(_))
        ));
        let f = m.freeze();
        assert!(generate_features(&f, &Tensor::zeros(&[2, 5]), &mut RngState::new(0), Sampling::Sample).is_err());
    }

    #[test]
    fn generation_modes() {
        let x = identity_fixture();
        let ae = build_mapping(&MappingSpec::with_defaults(Variant::Ae, 8, 8), &mut RngState::new(0))
            .unwrap()
            .freeze();
        let row = x.select_rows(&[0]);
        let a = generate_features(&ae, &row, &mut RngState::new(1), Sampling::Sample).unwrap();
        let b = generate_features(&ae, &row, &mut RngState::new(2), Sampling::Sample).unwrap();
        assert_eq!(a, b);

        let vae = build_mapping(&MappingSpec::with_defaults(Variant::Vae, 8, 8), &mut RngState::new(0))
            .unwrap()
            .freeze();
        let a = generate_features(&vae, &row, &mut RngState::new(1), Sampling::MeanOnly).unwrap();
        let b = generate_features(&vae, &row, &mut RngState::new(2), Sampling::MeanOnly).unwrap();
        assert_eq!(a, b);
        let a = generate_features(&vae, &row, &mut RngState::new(1), Sampling::Sample).unwrap();
        let b = generate_features(&vae, &row, &mut RngState::new(2), Sampling::Sample).unwrap();
        assert_ne!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn out_of_range_training_data_is_rejected() {
        let m = build_mapping(&MappingSpec::with_defaults(Variant::Ae, 2, 2), &mut RngState::new(0)).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.5, 1.5]).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 1, ..TrainConfig::default() };
        assert!(matches!(fit_mapping(m, &x, &x, &cfg, 1.0, &mut RngState::new(0)), Err(Error::Domain(_))));
    }

    #[test]
    fn vae_objective_gradients_match_finite_differences() {
        let mut rng = RngState::new(17);
        let spec = MappingSpec {
            variant: Variant::Vae,
            input_width: 4,
            output_width: 5,
            hidden: vec![6],
            latent_dim: 3,
        };
        let m = build_mapping(&spec, &mut rng).unwrap();
        let x = rng.uniform_tensor(&[3, 4]);
        let y = rng.uniform_tensor(&[3, 5]);
        let eps = rng.standard_normal(&[3, 3]);
        let err = mapping_grad_check(&m, &x, &y, LossKind::Mse, 0.7, &eps).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
