//! Hierarchical VAE with gradient-tuned Hamiltonian Monte Carlo for
//! mixed-type incomplete tabular data.
//!
//! The crate provides:
//! - a reverse-mode autodiff engine whose gradients are themselves
//!   differentiable expressions ([`tape`]), required for tuning leapfrog
//!   step sizes through the sampler;
//! - per-feature marginal VAEs that homogenize mixed-type columns into
//!   one-dimensional Gaussian codes ([`marginal`]);
//! - a hierarchical dependency model with a reparameterized latent space
//!   ([`model`]);
//! - an HMC engine with trainable per-step, per-dimension step sizes and
//!   per-layer proposal inflation tuned by a sliced kernelized Stein
//!   discrepancy ([`hmc`]);
//! - missing-data imputation and target prediction metrics ([`metrics`]);
//! - sequential active feature acquisition driven by a histogram estimate
//!   of conditional mutual information ([`saia`]).
//!
//! The `hhvaem` binary exposes the training, evaluation, imputation and
//! acquisition pipelines; see the repository README.

pub mod array;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod hmc;
pub mod likelihood;
pub mod marginal;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod saia;
pub mod tape;
#[cfg(test)]
pub(crate) mod testkit;
pub mod train;

pub use array::Array;
pub use error::{Error, Result};
pub use tape::{Tape, Var};
