//! Conditional autoregressive transformer over music tokens: a genre token
//! and a mood token followed by the music sequence, pre-LN blocks, learned
//! positions, and an output head over the music vocabulary only.

mod checkpoint;
mod config;
mod decode;
mod forward;
mod params;
mod train;

use thiserror::Error;

use crate::numerics::NumericsError;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, params_from_bytes, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{ModelConfig, SamplerConfig, TrainSchedule};
pub use decode::{generate, incremental_logits, sample_token, IncrementalDecoder, GREEDY_TEMPERATURE};
pub use forward::{forward_logits, loss_and_grads, mean_nll, nll, teacher_forced_logits};
pub use params::ModelParams;
pub use train::{train, train_with_progress, TrainOutcome};

pub(crate) use forward::mean_nll_refs;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("prompt (genre {genre}, mood {mood}) outside the model's prompt vocabulary")]
    InvalidPrompt { genre: usize, mood: usize },
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { token: usize, vocab: usize },
    #[error("sequence of {len} music tokens exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
