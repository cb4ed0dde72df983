//! Reverse-mode differentiation over dense matrices, with the handful of
//! graph primitives the model needs, plus Adam and checkpoint I/O.

mod adam;
mod checkpoint;
mod mlp;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::Mlp;
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
