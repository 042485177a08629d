//! Sequential networks: layers, losses, Adam, training and gradient checks.

mod gradcheck;
pub mod layer;
mod loss;
mod optim;
mod train;

use alloc::format;
use alloc::vec::Vec;

pub use gradcheck::{grad_check, grad_check_report, relative_error, GradCheckReport, FD_STEP};
pub use layer::{softmax_rows, Activation, Conv2d, Dense, Layer};
pub use loss::{compute_loss, one_hot, LossKind};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use train::{train, TrainConfig, TrainHistory};
pub(crate) use train::split_validation;

use layer::LayerCache;

use crate::{Error, Result, RngState, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Training,
    /// Dropout is the identity and parameters can no longer be updated.
    Frozen,
}

/// An ordered stack of layers with a fixed per-example input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    layers: Vec<Layer>,
    mode: Mode,
    // Bumped on every parameter update so stale caches are detectable.
    generation: u64,
}

/// Per-layer intermediates from [`Network::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    generation: u64,
    layers: Vec<LayerCache>,
}

/// Parameter gradients grouped by layer, in [`Layer::params`] order.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub per_layer: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn flatten(self) -> Vec<Tensor> {
        self.per_layer.into_iter().flatten().collect()
    }
}

const PREDICT_CHUNK: usize = 256;

impl Network {
    /// Checks that consecutive layer shapes line up. New networks start in
    /// training mode.
    pub fn new(input_shape: &[usize], layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        for (index, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|message| Error::Layer {
                index,
                kind: layer.kind_name(),
                message,
            })?;
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            output_shape: shape,
            layers,
            mode: Mode::Training,
            generation: 0,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_frozen(&self) -> bool {
        self.mode == Mode::Frozen
    }

    pub fn freeze(mut self) -> Self {
        self.mode = Mode::Frozen;
        self
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.generation += 1;
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() == 0 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::Layer {
                index: 0,
                kind: self.layers.first().map_or("input", Layer::kind_name),
                message: format!(
                    "expects [batch, {:?}], got {:?}",
                    self.input_shape,
                    x.shape()
                ),
            });
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, mut rng: Option<&mut RngState>, keep: bool) -> Result<(Tensor, Vec<LayerCache>)> {
        self.check_input(x)?;
        let training = self.mode == Mode::Training;
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut h = x.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            let (out, cache) = layer
                .forward(h, training, rng.as_deref_mut(), keep)
                .map_err(|message| Error::Layer {
                    index,
                    kind: layer.kind_name(),
                    message,
                })?;
            if let Some(c) = cache {
                caches.push(c);
            }
            h = out;
        }
        Ok((h, caches))
    }

    /// Forward pass that keeps what [`Network::backward`] needs. `rng` is
    /// required only for a training-mode network containing dropout.
    pub fn forward(&self, x: &Tensor, rng: Option<&mut RngState>) -> Result<(Tensor, ForwardCache)> {
        let (y, layers) = self.run(x, rng, true)?;
        Ok((
            y,
            ForwardCache {
                generation: self.generation,
                layers,
            },
        ))
    }

    /// Inference with frozen semantics (dropout off), processed in chunks.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let frozen;
        let net = if self.mode == Mode::Frozen {
            self
        } else {
            frozen = self.clone().freeze();
            &frozen
        };
        let n = x.rows();
        let mut out: Vec<f64> = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let (y, _) = net.run(&x.select_rows(&idx), None, false)?;
            out.extend_from_slice(y.data());
            start = end;
        }
        let mut shape = alloc::vec![n];
        shape.extend_from_slice(&self.output_shape);
        Tensor::new(shape, out)
    }

    /// Backpropagates `dy` through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, dy: &Tensor) -> Result<(Gradients, Tensor)> {
        let (g, dx) = self.backward_inner(cache, dy, true)?;
        Ok((g, dx.expect("input gradient requested")))
    }

    pub(crate) fn backward_inner(
        &self,
        cache: &ForwardCache,
        dy: &Tensor,
        input_grad: bool,
    ) -> Result<(Gradients, Option<Tensor>)> {
        if cache.generation != self.generation || cache.layers.len() != self.layers.len() {
            return Err(Error::Usage(
                "forward cache is stale or belongs to another network".into(),
            ));
        }
        let mut per_layer = alloc::vec![Vec::new(); self.layers.len()];
        let mut grad = dy.clone();
        for index in (0..self.layers.len()).rev() {
            let layer = &self.layers[index];
            let need_dx = input_grad || index > 0;
            let (g, dx) = layer
                .backward(&cache.layers[index], &grad, need_dx)
                .map_err(|message| Error::Layer {
                    index,
                    kind: layer.kind_name(),
                    message,
                })?;
            per_layer[index] = g;
            match dx {
                Some(dx) => grad = dx,
                None => {
                    return Ok((Gradients { per_layer }, None));
                }
            }
        }
        Ok((Gradients { per_layer }, Some(grad)))
    }

    /// Applies one Adam step. Frozen networks refuse updates.
    pub fn apply_adam(&mut self, grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
        if self.mode == Mode::Frozen {
            return Err(Error::Usage("cannot update a frozen network".into()));
        }
        let mut params = self.params_mut();
        adam_step(&mut params, grads, state, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_weight_dense_emits_bias() {
        let d = Dense::from_parts(Tensor::zeros(&[3, 2]), Tensor::new(vec![2], vec![0.3, -0.1]).unwrap()).unwrap();
        let net = Network::new(&[3], vec![Layer::Dense(d)]).unwrap();
        let x = Tensor::new(vec![1, 3], vec![5.0, -2.0, 9.0]).unwrap();
        let (y, _) = net.forward(&x, None).unwrap();
        assert_eq!(y.data(), &[0.3, -0.1]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let net = Network::new(&[2], vec![Layer::Activation(Activation::Softmax)]).unwrap();
        let (y, _) = net.forward(&Tensor::zeros(&[1, 2]), None).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn identity_conv_kernel_is_identity() {
        let w = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let conv = Conv2d::from_parts(w, Tensor::zeros(&[1])).unwrap();
        let net = Network::new(&[4, 5, 1], vec![Layer::Conv2d(conv)]).unwrap();
        let x = RngState::new(1).uniform_tensor(&[2, 4, 5, 1]);
        let (y, _) = net.forward(&x, None).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn relu_blocks_gradient_of_dead_unit() {
        let net = Network::new(&[1], vec![Layer::Activation(Activation::Relu)]).unwrap();
        let x = Tensor::new(vec![1, 1], vec![-1.0]).unwrap();
        let (_, cache) = net.forward(&x, None).unwrap();
        let (_, dx) = net.backward(&cache, &Tensor::full(&[1, 1], 1.0)).unwrap();
        assert_eq!(dx.data(), &[0.0]);
    }

    #[test]
    fn maxpool_routes_gradient_to_window_max() {
        let net = Network::new(&[4, 4, 1], vec![Layer::MaxPool2x2]).unwrap();
        let x = RngState::new(8).uniform_tensor(&[1, 4, 4, 1]);
        let (y, cache) = net.forward(&x, None).unwrap();
        let (_, dx) = net.backward(&cache, &Tensor::full(&[1, 2, 2, 1], 1.0)).unwrap();
        for wy in 0..2 {
            for wx in 0..2 {
                let cells: Vec<usize> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dy, dx)| (2 * wy + dy) * 4 + 2 * wx + dx)
                    .collect();
                let best = *cells
                    .iter()
                    .max_by(|&&a, &&b| x.data()[a].partial_cmp(&x.data()[b]).unwrap())
                    .unwrap();
                assert_eq!(y.data()[wy * 2 + wx], x.data()[best]);
                for c in cells {
                    assert_eq!(dx.data()[c], if c == best { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_names_the_layer() {
        let mut rng = RngState::new(0);
        let err = Network::new(
            &[3],
            vec![
                Layer::Dense(Dense::glorot(3, 4, &mut rng)),
                Layer::Dense(Dense::glorot(5, 2, &mut rng)),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Layer { index: 1, kind: "dense", .. }));

        let net = Network::new(&[3], vec![Layer::Dense(Dense::glorot(3, 4, &mut rng))]).unwrap();
        let err = net.forward(&Tensor::zeros(&[2, 4]), None).unwrap_err();
        assert!(matches!(err, Error::Layer { index: 0, .. }));
    }

    #[test]
    fn stale_cache_is_a_usage_error() {
        let mut rng = RngState::new(2);
        let mut net = Network::new(&[2], vec![Layer::Dense(Dense::glorot(2, 2, &mut rng))]).unwrap();
        let x = Tensor::zeros(&[1, 2]);
        let (_, cache) = net.forward(&x, None).unwrap();
        let (g, _) = net.backward(&cache, &Tensor::full(&[1, 2], 1.0)).unwrap();
        net.apply_adam(&g.flatten(), &mut AdamState::new(), &AdamConfig::default()).unwrap();
        assert!(matches!(net.backward(&cache, &Tensor::zeros(&[1, 2])), Err(Error::Usage(_))));
    }

    #[test]
    fn frozen_network_is_pure_and_immutable() {
        let mut rng = RngState::new(3);
        let net = Network::new(
            &[4],
            vec![
                Layer::Dense(Dense::glorot(4, 8, &mut rng)),
                Layer::dropout(0.5).unwrap(),
                Layer::Dense(Dense::glorot(8, 2, &mut rng)),
            ],
        )
        .unwrap();
        let mut frozen = net.freeze();
        let x = rng.uniform_tensor(&[3, 4]);
        let (a, _) = frozen.forward(&x, None).unwrap();
        let (b, _) = frozen.forward(&x, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(frozen.predict(&x).unwrap(), a);
        let grads: Vec<Tensor> = frozen.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        assert!(frozen.apply_adam(&grads, &mut AdamState::new(), &AdamConfig::default()).is_err());
    }

    #[test]
    fn training_dropout_needs_rng() {
        let net = Network::new(&[4], vec![Layer::dropout(0.3).unwrap()]).unwrap();
        assert!(net.forward(&Tensor::zeros(&[1, 4]), None).is_err());
    }

    #[test]
    fn dropout_rate_is_respected() {
        let rate = 0.3;
        let net = Network::new(&[10_000], vec![Layer::dropout(rate).unwrap()]).unwrap();
        let x = Tensor::full(&[1, 10_000], 1.0);
        let (y, _) = net.forward(&x, Some(&mut RngState::new(99))).unwrap();
        let dropped = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
        assert!((dropped - rate).abs() <= 0.02, "dropped {dropped}");
        let kept = y.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((kept - 1.0 / (1.0 - rate)).abs() < 1e-12);
        let (z, _) = net.clone().freeze().forward(&x, None).unwrap();
        assert_eq!(z, x);
        assert!(Layer::dropout(1.0).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = RngState::new(12);
        for _ in 0..100 {
            let x = rng.standard_normal(&[4, 7]).scale(10.0);
            let s = softmax_rows(&x);
            for r in 0..4 {
                let total: f64 = s.row(r).iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(s.row(r).iter().all(|&p| p > 0.0));
            }
        }
    }
}
