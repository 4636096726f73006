//! E(n)-equivariant graph network for multi-property regression, with
//! spectral normalization of the decoder.

mod batch;
mod layer;
mod model;
pub mod nn;

pub use batch::{CoordNorm, GraphBatch};
pub use layer::{EgnnLayer, LayerOutput};
pub use model::{
    load_checkpoint, save_checkpoint, EgnnConfig, EgnnModel, SpectralScope, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use nn::{flatten_grads, Bound, Linear, Mlp, Momentum, Parameterized};
