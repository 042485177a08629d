//! Finite-difference checks for every layer kind on small random networks.

use crossaug_core::autoencoder::{build_mapping, mapping_grad_check, MappingSpec, Variant};
use crossaug_core::nn::{grad_check, one_hot, Activation, Conv2d, Dense, Layer, LossKind, Network};
use crossaug_core::{Result, RngState, Tensor};

pub const KINDS: [&str; 10] =
    ["dense", "conv2d", "maxpool", "dropout-frozen", "relu", "sigmoid", "softmax+ce", "mse", "bce", "vae"];

pub const TOLERANCE: f64 = 1e-4;

fn unit(rng: &mut RngState, shape: &[usize]) -> Tensor {
    rng.uniform_tensor(shape)
}

fn sym(rng: &mut RngState, shape: &[usize]) -> Tensor {
    unit(rng, shape).map(|v| 2.0 * v - 1.0)
}

/// Worst relative error for one layer kind at one seed.
pub fn check_kind(kind: &str, seed: u64) -> Result<f64> {
    let mut rng = RngState::new(seed);
    let r = &mut rng;
    let dense = |i, o, r: &mut RngState| Layer::Dense(Dense::glorot(i, o, r));
    match kind {
        "dense" => {
            let net = Network::new(&[5], vec![dense(5, 3, r)])?;
            grad_check(&net, &sym(r, &[4, 5]), &sym(r, &[4, 3]), LossKind::Mse)
        }
        "conv2d" => {
            let net = Network::new(&[5, 5, 2], vec![Layer::Conv2d(Conv2d::glorot(3, 2, 3, r)?), Layer::Flatten])?;
            grad_check(&net, &sym(r, &[2, 5, 5, 2]), &sym(r, &[2, 75]), LossKind::Mse)
        }
        "maxpool" => {
            let net = Network::new(
                &[4, 6, 2],
                vec![Layer::Conv2d(Conv2d::glorot(3, 2, 2, r)?), Layer::MaxPool2x2, Layer::Flatten],
            )?;
            grad_check(&net, &sym(r, &[2, 4, 6, 2]), &sym(r, &[2, 12]), LossKind::Mse)
        }
        "dropout-frozen" => {
            // Training mode with the checker's fixed mask, then the frozen
            // (identity) network.
            let net = Network::new(&[5], vec![dense(5, 8, r), Layer::dropout(0.4)?, dense(8, 2, r)])?;
            let (x, y) = (sym(r, &[3, 5]), sym(r, &[3, 2]));
            let training = grad_check(&net, &x, &y, LossKind::Mse)?;
            Ok(training.max(grad_check(&net.freeze(), &x, &y, LossKind::Mse)?))
        }
        "relu" => {
            let net = Network::new(&[5], vec![dense(5, 7, r), Layer::Activation(Activation::Relu), dense(7, 3, r)])?;
            grad_check(&net, &sym(r, &[4, 5]), &sym(r, &[4, 3]), LossKind::Mse)
        }
        "sigmoid" => {
            let net = Network::new(&[5], vec![dense(5, 4, r), Layer::Activation(Activation::Sigmoid)])?;
            grad_check(&net, &sym(r, &[4, 5]), &unit(r, &[4, 4]), LossKind::Mse)
        }
        "softmax+ce" => {
            let net = Network::new(&[5], vec![dense(5, 4, r), Layer::Activation(Activation::Softmax)])?;
            let labels: Vec<usize> = (0..6).map(|_| r.below(4)).collect();
            grad_check(&net, &sym(r, &[6, 5]), &one_hot(&labels, 4)?, LossKind::SoftmaxCe)
        }
        "mse" => {
            let net = Network::new(&[3], vec![dense(3, 6, r), Layer::Activation(Activation::Sigmoid), dense(6, 6, r)])?;
            grad_check(&net, &sym(r, &[8, 3]), &sym(r, &[8, 6]), LossKind::Mse)
        }
        "bce" => {
            let net = Network::new(&[5], vec![dense(5, 4, r), Layer::Activation(Activation::Sigmoid)])?;
            grad_check(&net, &sym(r, &[4, 5]), &unit(r, &[4, 4]), LossKind::Bce)
        }
        "vae" => {
            let spec = MappingSpec {
                hidden: vec![6],
                latent_dim: 3,
                ..MappingSpec::with_defaults(Variant::Vae, 4, 5)
            };
            let model = build_mapping(&spec, r)?;
            let (x, y) = (unit(r, &[3, 4]), unit(r, &[3, 5]));
            let eps = r.standard_normal(&[3, 3]);
            mapping_grad_check(&model, &x, &y, LossKind::Mse, 0.7, &eps)
        }
        other => Err(crossaug_core::Error::Usage(format!("unknown layer kind `{other}`"))),
    }
}

/// Worst error per kind over seeds `0..seeds`.
pub fn run_suite(seeds: u64) -> Result<Vec<(&'static str, f64)>> {
    KINDS
        .iter()
        .map(|&k| {
            let mut worst = 0.0f64;
            for s in 0..seeds {
                worst = worst.max(check_kind(k, s)?);
            }
            Ok((k, worst))
        })
        .collect()
}
