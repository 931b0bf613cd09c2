//! Fixed-architecture network with hand-written reverse-mode gradients.
//!
//! Graph: an LSTM over the normalized book sequence and another over the private-state
//! sequence (last hidden states kept), a two-layer ReLU MLP over the macro vector, their
//! concatenation as the market embedding, then four one-hidden-layer heads: state value,
//! price advantages, quantity advantages and volatility. Each branch's Q-values are
//! `V + A - mean(A)`.

mod adam;
mod checkpoint;
mod layers;
mod network;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layers::{Linear, Lstm};
pub use network::{
    backward, forward, forward_with_tape, ForwardOutput, NetConfig, NetworkParams, Tape, Upstream,
};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
