//! Numeric core for cross-dataset feature augmentation.
//!
//! Two datasets that share a handful of features are aligned, an
//! encoder–decoder network is fitted on the donor to map its shared
//! features to its full feature set, and the frozen network then
//! synthesizes the donor-only features for every recipient row.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. File
//! formats, the experiment runner and the command-line front end live in
//! the companion `crossaug` crate.
//!
//! Modules:
//!
//! - [`tensor`] / [`rng`] - dense row-major `f64` arrays and the seeded
//!   ChaCha8 generator every random draw flows through.
//! - [`nn`] - sequential networks, losses, Adam, training and gradient checks.
//! - [`autoencoder`] - the AE / VAE mapping network.
//! - [`data`] - schemas, encoding, alignment, partitioning, image masking
//!   and the synthetic data generators.
//! - [`augment`] - the align / fit / generate / append procedure.
//! - [`eval`] - F1 scoring and classifier training.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod autoencoder;
pub mod data;
mod error;
pub mod eval;
pub(crate) mod math;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::RngState;
pub use tensor::Tensor;
