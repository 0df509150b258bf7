//! Neural building blocks: parameter store, LSTM, affine layers,
//! initialization and the checkpoint format.

mod checkpoint;
mod init;
mod layers;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use init::{init_params, InitScheme};
pub use layers::{affine, lstm_cell_step, lstm_run, lstm_run_vars, AffineParams, LstmParams};
pub use params::{ParamError, ParamId, ParamKind, ParamStore};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("lstm: empty input sequence")]
    EmptySequence,
}
