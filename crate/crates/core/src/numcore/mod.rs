//! Numerical substrate: dense matrices, a reverse-mode tape, power iteration
//! with spectral normalization, SiLU, and a weighted least-squares solver.

mod matrix;
mod silu;
mod spectral;
mod tape;
mod wls;

pub use matrix::{dot, norm2, Matrix};
pub use silu::{logistic, silu, silu_derivative, SILU_LIPSCHITZ};
pub use spectral::{
    certify, power_iteration, spectral_normalize, SpectralState, CERTIFY_MAX_STEPS, CERTIFY_STEPS, CERTIFY_TOLERANCE, DEGENERATE_SIGMA, TRAINING_STEPS,
};
pub use tape::{Gradients, Tape, Var};
pub use wls::{wls_solve, WlsSolution, RIDGE_LAMBDA};
