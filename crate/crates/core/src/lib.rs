//! Explainable multi-property molecular optimization: an equivariant
//! property regressor with spectral normalization, a conditional denoising
//! diffusion model, drug-likeness constraints and Shapley edge attributions.

pub mod diffusion;
pub mod egnn;
pub mod error;
pub mod explain;
pub mod molgraph;
pub mod numcore;
pub mod qed;
pub mod training;

pub use error::{Error, Result};
