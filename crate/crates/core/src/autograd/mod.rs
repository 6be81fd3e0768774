//! Minimal reverse-mode differentiation: just the layers, losses, and
//! optimizer the localization pipeline needs.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{gradcheck, GradCheck};
pub use layers::{Conv1dLayer, Linear, LstmLayer, FORGET_BIAS_INIT};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Tape, Var, BCE_EPS};
pub use tensor::Tensor;

