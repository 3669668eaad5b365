//! Synthetic conditioned token world, train/forget/remain splits, and the
//! newline-delimited dataset file.

mod io;
mod splits;
mod world;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::ContentHasher;

pub use io::{load_splits, read_splits, save_splits, write_splits, FORMAT_VERSION};
pub use splits::{make_splits, DatasetSplits, ForgetSelection, Pool, SplitConfig, MIN_REFERENCES_PER_PROMPT};
pub use world::{build_world, mean_row_tv, min_pairwise_tv, sample_pair, tv_distance, Chain, WorldConfig, WorldSpec};

pub const PROMPT_LEN: usize = 2;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid world or split configuration: {0}")]
    InvalidConfig(String),
    #[error("could not build a world with distinct transition matrices after {0} attempts")]
    RejectionCapExceeded(u64),
    #[error("invalid prompt (genre {genre}, mood {mood})")]
    InvalidPrompt { genre: usize, mood: usize },
    #[error("cannot forget {n_forget} items from a training set of {n_train}")]
    ForgetTooLarge { n_forget: usize, n_train: usize },
    #[error("remain set is empty")]
    EmptyRemain,
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { token: usize, vocab: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("split invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A structured two-token prompt: one genre token and one mood token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub genre: usize,
    pub mood: usize,
}

impl Prompt {
    pub fn new(genre: usize, mood: usize) -> Self {
        Self { genre, mood }
    }
}

/// One (prompt, token sequence) pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PairedExample {
    pub prompt: Prompt,
    pub tokens: Vec<usize>,
}

impl PairedExample {
    pub fn new(prompt: Prompt, tokens: Vec<usize>) -> Self {
        Self { prompt, tokens }
    }

    pub fn content_hash(&self) -> String {
        ContentHasher::new()
            .usizes(&[self.prompt.genre, self.prompt.mood])
            .usizes(&self.tokens)
            .finish()
    }
}
