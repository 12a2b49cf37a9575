//! Phase-diagram experiments for two-layer ReLU networks trained by
//! gradient flow on the square loss.

pub mod datasets;
pub mod dynamics;
pub mod error;
pub mod features;
pub mod kernels;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod scaling;
pub mod scan;
pub mod theory;

pub use error::{Error, Result};
