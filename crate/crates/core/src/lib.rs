//! Training-image based geostatistical simulation and Bayesian inversion
//! built around a convolutional GAN.
//!
//! The crate is organized along the processing pipeline:
//!
//! - [`tensor`], [`convnet`]: dense tensors, direct/transposed convolution
//!   layers with analytic gradients, generator/discriminator assembly and
//!   checkpointing.
//! - [`train`]: the adversarial training loop (patch sampling, losses,
//!   Adam updates, per-epoch checkpoints).
//! - [`simulate`]: latent sampling and realization generation with
//!   post-processing.
//! - [`metrics`]: facies fractions, two-point probability and
//!   connectivity functions, ensemble bands.
//! - [`flow`]: a steady-state finite-difference groundwater flow solver
//!   with harmonic-mean conductances.
//! - [`mcmc`]: multi-chain differential-evolution Metropolis sampling with
//!   a past-state archive, snooker moves, likelihood tempering and the
//!   Gelman-Rubin diagnostic.
//! - [`grid`], [`checkpoint`]: file formats.

pub mod checkpoint;
pub mod convnet;
pub mod error;
pub mod flow;
pub mod grid;
pub mod mcmc;
pub mod metrics;
pub mod simulate;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use grid::{CategoricalGrid, ContinuousGrid, Grid};
pub use simulate::LatentField;
pub use tensor::Tensor;
