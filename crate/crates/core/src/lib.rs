//! Continuous-conditional GAN laboratory.
//!
//! Implements PcDGAN (singular vicinal losses, a Lambert-W based conditioning
//! score, and a performance-conditioned DPP diversity loss) alongside a CcGAN
//! baseline, trained and evaluated on two 2D Gaussian-mixture benchmarks with
//! a known, differentiable performance function.
//!
//! Layout:
//! - [`tensor`]: reverse-mode autodiff over dense 2D tensors
//! - [`nn`]: MLP generator/discriminator, Adam with staircase lr decay
//! - [`llets`]: Lambert W and the log-exponential transition score
//! - [`dpp`]: conditioned DPP kernel and differentiable log-determinant loss
//! - [`vicinal`]: singular/uniform label sampling and vicinal GAN losses
//! - [`synthetic`]: benchmark datasets and the exact performance function
//! - [`eval`]: label error, KDE likelihood, and diversity metrics
//! - [`config`], [`train`], [`plot`]: run orchestration and artifacts

pub mod config;
pub mod dpp;
pub mod error;
pub mod eval;
pub mod llets;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod vicinal;

mod linalg;
mod par;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
