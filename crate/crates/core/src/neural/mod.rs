//! The trainable core: LSTM recurrence, masked softmax output layer,
//! backpropagation through time, gradient clipping and AdaDelta.
//!
//! Arithmetic is `f64` throughout. One dialog is one minibatch and
//! per-turn gradients are summed.

mod checkpoint;
mod lstm;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC};
pub use lstm::{
    assemble_input, forward_dialog, init_parameters, lstm_step, output_distribution,
    reinforce_gradients, sequence_log_prob, supervised_gradients, unmasked_distribution,
    ActionDistribution, ActionMask, Gradients, LstmParameters, LstmState,
};
pub use optim::{
    adadelta_step, apply_gradients, clip_global_norm, AdaDeltaState, DEFAULT_EPSILON, DEFAULT_RHO,
};
pub use tensor::{Dims, Gate, Matrix, Tensors};

pub(crate) use lstm::{logits as output_logits, masked_softmax, network_input, step_sparse};

/// Norm threshold applied before every update.
pub const CLIP_NORM: f64 = 1.0;
