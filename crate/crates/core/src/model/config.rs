use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dataset::{WorldSpec, PROMPT_LEN};

/// Architecture of the conditional transformer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Music-token vocabulary.
    pub vocab: usize,
    pub genres: usize,
    pub moods: usize,
    /// Music tokens per sequence.
    pub seq_len: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 2,
            n_layers: 2,
            d_ff: 128,
            vocab: 64,
            genres: 8,
            moods: 4,
            seq_len: 32,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Copies the vocabulary and sequence sizes from a world.
    pub fn for_world(mut self, world: &WorldSpec) -> Self {
        self.vocab = world.vocab();
        self.genres = world.genres();
        self.moods = world.moods();
        self.seq_len = world.seq_len();
        self
    }

    pub fn context_len(&self) -> usize {
        PROMPT_LEN + self.seq_len
    }

    /// Music tokens, then genre tokens, then mood tokens.
    pub fn joint_vocab(&self) -> usize {
        self.vocab + self.genres + self.moods
    }

    pub fn genre_token(&self, genre: usize) -> usize {
        self.vocab + genre
    }

    pub fn mood_token(&self, mood: usize) -> usize {
        self.vocab + self.genres + mood
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.vocab == 0 || self.genres == 0 || self.moods == 0 || self.seq_len == 0 {
            return bad("vocabulary and sequence sizes must be positive".into());
        }
        if self.context_len() < PROMPT_LEN + 1 {
            return bad("context too short".into());
        }
        Ok(())
    }
}

/// Decoding parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub temperature: f64,
    /// 0 disables truncation.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_k: 0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, vocab: usize) -> Result<(), ModelError> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(ModelError::InvalidConfig(format!("temperature {} must be > 0", self.temperature)));
        }
        if self.top_k > vocab {
            return Err(ModelError::InvalidConfig(format!("top_k {} exceeds vocabulary {vocab}", self.top_k)));
        }
        Ok(())
    }
}

/// Optimization schedule for base training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 32,
            lr: 3e-4,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(ModelError::InvalidConfig(format!("learning rate {} must be > 0", self.lr)));
        }
        Ok(())
    }
}
