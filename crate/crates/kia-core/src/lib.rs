//! Koopman invertible autoencoder core.
//!
//! Everything numeric lives here: a small reverse-mode autodiff engine over
//! dense f64 tensors, the encoder/decoder networks and the invertible
//! coupling operator, the multi-step training losses with Adam, pendulum and
//! synthetic sea-surface-temperature data generation, and the forecast
//! evaluation protocols. The crate is `no_std` compatible (with `alloc`);
//! file formats, the CLI and everything else that touches the filesystem
//! live in the companion `kia` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dynamics;
pub mod eval;
pub(crate) mod math;
pub mod model;
pub mod tensor;
pub mod train;

pub use model::{KiaModel, ModelConfig, Variant};
pub use tensor::{Tape, Tensor};
pub use train::{LossWeights, TrainConfig};
