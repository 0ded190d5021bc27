//! Small dense networks with hand-written reverse mode.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod commnet;
pub mod loss;
pub mod matrix;
pub mod mlp;

pub use activation::{sigmoid_eval, tanh_eval};
pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, load_checkpoint_as, save_checkpoint};
pub use commnet::{
    commnet_backward, commnet_backward_with, commnet_unroll, sequence_loss, SequenceBatch, SequenceLoss, Unroll,
    SEQ_LEN,
};
pub use loss::{bce_loss, mse_loss};
pub use matrix::Matrix;
pub use mlp::{Arch, Hidden, Layer, MlpGrads, MlpParams, Tape, HIDDEN};
