//! The attentional LSTM translator: parameters, exact gradients, Adam,
//! greedy decoding and checkpoint algebra.

mod adam;
mod batch;
mod checkpoint;
mod config;
mod decode;
mod network;
mod params;
mod tensor;

pub use adam::{adam_step, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use batch::{Batch, IdPair};
pub use checkpoint::{
    average_checkpoints, checkpoint_bytes, checkpoint_from_bytes, extend_checkpoint_vocab, init_model, load_checkpoint, save_checkpoint,
    select_window, AveragingWindow, Checkpoint, CHECKPOINT_VERSION,
};
pub use config::ModelConfig;
pub use decode::{greedy_decode, greedy_decode_ids, greedy_decode_many};
pub use network::{
    attend, batch_loss, decode_step, encode, gradients, loss_and_gradients, DecoderState,
    EncoderOutput,
};
pub use params::{LstmWeights, ModelParams, INIT_RANGE};
pub use tensor::{Matrix, Real};
