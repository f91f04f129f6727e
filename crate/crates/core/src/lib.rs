//! Core library for a desk-scale study of two-stage autoencoder training:
//! a dense-tensor autodiff engine, synthetic mixture data on an embedded
//! circle, small autoencoder families (plain, variational, vector-quantized),
//! stage-based training with parameter freezing, geometry/complexity
//! analysis, and closed-form oracles that cross-check the learned behavior.

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod analysis;
pub mod checkpoint;
pub mod data;
pub mod eig;
pub mod error;
pub mod io;
pub mod linalg;
pub mod models;
pub mod oracles;
pub mod rng;
pub mod table1;
pub mod tensor;
pub mod train;

pub use error::{CoreError, Result};
