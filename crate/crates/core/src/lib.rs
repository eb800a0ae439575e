//! Simulation and analysis of terahertz imaging with undetected photons.
//!
//! Photon pairs from a nonlinear crystal are modelled as a Gaussian position
//! correlation, pushed through a scene and a delay scan to produce detector
//! waveforms, and the weak interference is recovered per pixel by Fourier
//! filtering ("distillation") before metrology is applied.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biphoton;
pub mod distill;
pub mod error;
pub mod fit;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod qmc;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
