use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{init_weight, MetricsError};
use crate::dataset::Prompt;
use crate::numerics::{adam_step, Direction, NodeId};
use crate::seed::{rng, ContentHasher};
use crate::{AdamState, Graph, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Joint embedding dimension.
    pub dim: usize,
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    /// Multiplier on cosine similarities inside the contrastive softmax.
    pub logit_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            hidden: 64,
            steps: 800,
            lr: 3e-3,
            logit_scale: 10.0,
        }
    }
}

// prompt tower
const GENRE_EMB: usize = 0;
const MOOD_EMB: usize = 1;
const PW1: usize = 2;
const PB1: usize = 3;
const PW2: usize = 4;
const PB2: usize = 5;
// sequence tower
const LN_GAIN: usize = 6;
const LN_BIAS: usize = 7;
const SW1: usize = 8;
const SB1: usize = 9;
const SW2: usize = 10;
const SB2: usize = 11;

/// Prompt and sequence towers mapping into a shared unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct DualEncoder {
    genres: usize,
    moods: usize,
    params: Vec<Tensor>,
}

fn prompt_tower(g: &mut Graph, p: &[NodeId], prompts: &[Prompt]) -> Result<NodeId, MetricsError> {
    let genres: Vec<usize> = prompts.iter().map(|q| q.genre).collect();
    let moods: Vec<usize> = prompts.iter().map(|q| q.mood).collect();
    let a = g.embedding(p[GENRE_EMB], &genres)?;
    let b = g.embedding(p[MOOD_EMB], &moods)?;
    let h = g.add(a, b)?;
    let h = g.matmul(h, p[PW1])?;
    let h = g.add_bias(h, p[PB1])?;
    let h = g.gelu(h)?;
    let h = g.matmul(h, p[PW2])?;
    let h = g.add_bias(h, p[PB2])?;
    Ok(g.normalize_rows(h)?)
}

fn sequence_tower(g: &mut Graph, p: &[NodeId], x: NodeId) -> Result<NodeId, MetricsError> {
    let h = g.layer_norm(x, p[LN_GAIN], p[LN_BIAS])?;
    let h = g.matmul(h, p[SW1])?;
    let h = g.add_bias(h, p[SB1])?;
    let h = g.gelu(h)?;
    let h = g.matmul(h, p[SW2])?;
    let h = g.add_bias(h, p[SB2])?;
    Ok(g.normalize_rows(h)?)
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    t.data().chunks(t.cols()).map(<[f64]>::to_vec).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Held-out quality of a trained encoder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentQuality {
    pub matched_cosine: f64,
    pub mismatched_cosine: f64,
    /// Fraction of sequences whose nearest prompt embedding is their own.
    pub retrieval: f64,
}

impl AlignmentQuality {
    pub fn margin(&self) -> f64 {
        self.matched_cosine - self.mismatched_cosine
    }
}

impl DualEncoder {
    /// Symmetric InfoNCE: each step takes one sequence per prompt and
    /// classifies sequences to prompts and prompts to sequences over the
    /// in-batch similarity matrix.
    pub fn train(
        pools: &BTreeMap<Prompt, Vec<Vec<f64>>>,
        genres: usize,
        moods: usize,
        cfg: &EncoderConfig,
        seed: u64,
    ) -> Result<Self, MetricsError> {
        if pools.len() < 2 {
            return Err(MetricsError::DegeneratePool(pools.len()));
        }
        if pools.values().any(Vec::is_empty) {
            return Err(MetricsError::EmptyPool);
        }
        if pools.keys().any(|p| p.genre >= genres || p.mood >= moods) {
            return Err(MetricsError::InvalidConfig("pool prompt outside the prompt vocabulary".into()));
        }
        if cfg.dim == 0 || cfg.hidden == 0 || !(cfg.lr > 0.0) || !(cfg.logit_scale > 0.0) {
            return Err(MetricsError::InvalidConfig("encoder dim, hidden, lr and logit_scale must be positive".into()));
        }
        let d_in = pools.values().next().expect("nonempty")[0].len();
        let (h, d) = (cfg.hidden, cfg.dim);
        let mut r = rng(seed);
        let mut params = vec![
            init_weight(&mut r, genres, h),
            init_weight(&mut r, moods, h),
            init_weight(&mut r, h, h),
            Tensor::zeros(&[h]),
            init_weight(&mut r, h, d),
            Tensor::zeros(&[d]),
            Tensor::filled(&[d_in], 1.0),
            Tensor::zeros(&[d_in]),
            init_weight(&mut r, d_in, h),
            Tensor::zeros(&[h]),
            init_weight(&mut r, h, d),
            Tensor::zeros(&[d]),
        ];
        let prompts: Vec<Prompt> = pools.keys().copied().collect();
        let n = prompts.len();
        let targets: Vec<usize> = (0..n).collect();
        let mask = vec![true; n];
        let mut state = AdamState::new(&params);
        for _ in 0..cfg.steps {
            let mut x = Vec::with_capacity(n * d_in);
            for p in &prompts {
                let pool = &pools[p];
                let row = &pool[r.random_range(0..pool.len())];
                if row.len() != d_in {
                    return Err(MetricsError::DimensionMismatch("feature vectors differ in length".into()));
                }
                x.extend_from_slice(row);
            }
            let mut g = Graph::new();
            let nodes: Vec<NodeId> = params.iter().map(|t| g.param(t.clone())).collect();
            let xs = g.constant(Tensor::matrix(n, d_in, x)?);
            let s = sequence_tower(&mut g, &nodes, xs)?;
            let pe = prompt_tower(&mut g, &nodes, &prompts)?;
            let pt = g.transpose(pe)?;
            let sim = g.matmul(s, pt)?;
            let sim = g.scale(sim, cfg.logit_scale)?;
            let sim_t = g.transpose(sim)?;
            let l1 = g.cross_entropy(sim, &targets, &mask)?;
            let l2 = g.cross_entropy(sim_t, &targets, &mask)?;
            let total = g.add(l1, l2)?;
            let loss = g.scale(total, 0.5)?;
            let mut grads = g.backward(loss)?;
            let grads = nodes.iter().map(|&id| grads.take_or_zeros(id)).collect::<Result<Vec<_>, _>>()?;
            adam_step(&mut params, &grads, &mut state, cfg.lr, Direction::Descent)?;
        }
        Ok(Self { genres, moods, params })
    }

    pub fn encode_prompts(&self, prompts: &[Prompt]) -> Result<Vec<Vec<f64>>, MetricsError> {
        if prompts.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(p) = prompts.iter().find(|p| p.genre >= self.genres || p.mood >= self.moods) {
            return Err(MetricsError::InvalidConfig(format!("prompt {p:?} outside the encoder's vocabulary")));
        }
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = self.params.iter().map(|t| g.constant(t.clone())).collect();
        let out = prompt_tower(&mut g, &nodes, prompts)?;
        Ok(rows_of(g.value(out)))
    }

    pub fn encode_sequences(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MetricsError> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let d_in = self.params[LN_GAIN].len();
        if features.iter().any(|f| f.len() != d_in) {
            return Err(MetricsError::DimensionMismatch(format!("sequence features must have length {d_in}")));
        }
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = self.params.iter().map(|t| g.constant(t.clone())).collect();
        let x = g.constant(Tensor::matrix(features.len(), d_in, features.concat())?);
        let out = sequence_tower(&mut g, &nodes, x)?;
        Ok(rows_of(g.value(out)))
    }

    /// Cosine between a prompt's encoding and each sequence's encoding.
    pub fn clap_scores(&self, prompt: Prompt, features: &[Vec<f64>]) -> Result<Vec<f64>, MetricsError> {
        let pe = self.encode_prompts(&[prompt])?.remove(0);
        Ok(self.encode_sequences(features)?.iter().map(|s| clap_score(&pe, s)).collect())
    }

    /// Matched vs mismatched cosine and nearest-prompt retrieval over the
    /// given pools. Every prompt of the encoder's vocabulary is a retrieval
    /// candidate.
    pub fn quality(&self, pools: &BTreeMap<Prompt, Vec<Vec<f64>>>) -> Result<AlignmentQuality, MetricsError> {
        let candidates: Vec<Prompt> = (0..self.genres)
            .flat_map(|g| (0..self.moods).map(move |m| Prompt::new(g, m)))
            .collect();
        let enc = self.encode_prompts(&candidates)?;
        let index = |p: Prompt| p.genre * self.moods + p.mood;
        let (mut matched, mut mismatched, mut hits, mut n, mut n_mis) = (0.0, 0.0, 0usize, 0usize, 0usize);
        for (&p, feats) in pools {
            for s in self.encode_sequences(feats)? {
                let sims: Vec<f64> = enc.iter().map(|e| dot(e, &s)).collect();
                let own = index(p);
                matched += sims[own];
                for (j, &v) in sims.iter().enumerate() {
                    if j != own {
                        mismatched += v;
                        n_mis += 1;
                    }
                }
                if super::classifier::argmax(&sims) == own {
                    hits += 1;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(MetricsError::EmptyPool);
        }
        Ok(AlignmentQuality {
            matched_cosine: matched / n as f64,
            mismatched_cosine: if n_mis == 0 { 0.0 } else { mismatched / n_mis as f64 },
            retrieval: hits as f64 / n as f64,
        })
    }

    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        h.usizes(&[self.genres, self.moods]);
        for t in &self.params {
            h.usizes(t.shape()).f64s(t.data());
        }
        h.finish()
    }
}

/// Cosine of two unit-norm encodings, clamped into [-1, 1] against round-off.
pub fn clap_score(prompt_encoding: &[f64], sequence_encoding: &[f64]) -> f64 {
    dot(prompt_encoding, sequence_encoding).clamp(-1.0, 1.0)
}
