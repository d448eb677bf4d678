//! Congruence class models (CCMs) for networks and Bayesian inference on
//! partially observed networks.

pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod graph;
pub mod graphical;
pub mod harness;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod svg;
pub mod vgl;
pub mod wphi;

pub use error::{CcmError, Result};
