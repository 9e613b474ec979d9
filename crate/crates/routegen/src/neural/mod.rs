//! Differentiable building blocks: tape autograd, parameter storage, LSTM
//! cells, the Adam optimizer, and checkpoint files.

mod adam;
mod checkpoint;
mod lstm;
mod params;
mod tape;

pub use adam::{Adam, OptimError};
pub use checkpoint::{
    load_checkpoint, meta_strings, meta_usize, save_checkpoint, Checkpoint, CheckpointError,
    CHECKPOINT_VERSION,
};
pub use lstm::{LstmLayer, LstmStack, LstmState};
pub use params::{Param, ParamStore, INIT_SCALE};
pub use tape::{max_rel_error, Gradients, NodeId, Tape};
