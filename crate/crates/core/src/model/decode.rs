//! Incremental (one token at a time) decoding with cached keys and values,
//! and ancestral sampling on top of it.

use rand::Rng as _;

use super::forward::{check_prompt, check_tokens};
use super::params::Layout;
use super::{ModelError, ModelParams, SamplerConfig};
use crate::dataset::Prompt;
use crate::numerics::{gelu_value, gemm_acc, softmax_in_place};
use crate::seed::Rng;

/// Below this temperature sampling degenerates to argmax.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;
const LAYER_NORM_EPS: f64 = 1e-5;

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().copied().sum::<f64>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    x.iter()
        .zip(gain)
        .zip(bias)
        .map(|((&v, &g), &b)| (v - mean) * r * g + b)
        .collect()
}

fn vec_mat(x: &[f64], w: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    gemm_acc(1, x.len(), cols, x, w, &mut out);
    out
}

/// Decoder state for one sequence.
pub struct IncrementalDecoder<'a> {
    params: &'a ModelParams,
    layout: Layout,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    pos: usize,
}

impl<'a> IncrementalDecoder<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        let n = params.config().n_layers;
        Self {
            params,
            layout: params.layout(),
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            pos: 0,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Feeds one joint-vocabulary token and returns next-token logits over
    /// the music vocabulary.
    pub fn push(&mut self, token: usize) -> Result<Vec<f64>, ModelError> {
        let cfg = self.params.config();
        if self.pos >= cfg.context_len() {
            return Err(ModelError::SequenceTooLong {
                len: self.pos + 1 - 2,
                max: cfg.seq_len,
            });
        }
        if token >= cfg.joint_vocab() {
            return Err(ModelError::TokenOutOfVocab {
                token,
                vocab: cfg.joint_vocab(),
            });
        }
        let t = self.params.tensors();
        let d = cfg.d_model;
        let heads = cfg.n_heads;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let mut h: Vec<f64> = t[self.layout.tok_emb]
            .row(token)
            .iter()
            .zip(t[self.layout.pos_emb].row(self.pos))
            .map(|(a, b)| a + b)
            .collect();
        for (l, slots) in self.layout.layers.iter().enumerate() {
            let a = layer_norm(&h, t[slots.ln1_gain].data(), t[slots.ln1_bias].data());
            let q = vec_mat(&a, t[slots.wq].data(), d);
            let k = vec_mat(&a, t[slots.wk].data(), d);
            let v = vec_mat(&a, t[slots.wv].data(), d);
            self.keys[l].extend_from_slice(&k);
            self.values[l].extend_from_slice(&v);
            let n_ctx = self.pos + 1;
            let mut att = vec![0.0; d];
            for hd in 0..heads {
                let off = hd * dh;
                let qh = &q[off..off + dh];
                let mut probs: Vec<f64> = (0..n_ctx)
                    .map(|j| {
                        let kj = &self.keys[l][j * d + off..j * d + off + dh];
                        qh.iter().zip(kj).fold(0.0, |acc, (&x, &y)| acc + x * y) * scale
                    })
                    .collect();
                softmax_in_place(&mut probs);
                let oh = &mut att[off..off + dh];
                for (j, &p) in probs.iter().enumerate() {
                    let vj = &self.values[l][j * d + off..j * d + off + dh];
                    for (o, &vv) in oh.iter_mut().zip(vj) {
                        *o += p * vv;
                    }
                }
            }
            let o = vec_mat(&att, t[slots.wo].data(), d);
            for (hv, ov) in h.iter_mut().zip(&o) {
                *hv += ov;
            }
            let b = layer_norm(&h, t[slots.ln2_gain].data(), t[slots.ln2_bias].data());
            let mut f = vec_mat(&b, t[slots.w1].data(), cfg.d_ff);
            for (fv, &bias) in f.iter_mut().zip(t[slots.b1].data()) {
                *fv = gelu_value(*fv + bias);
            }
            let mut f2 = vec_mat(&f, t[slots.w2].data(), d);
            for (fv, &bias) in f2.iter_mut().zip(t[slots.b2].data()) {
                *fv += bias;
            }
            for (hv, fv) in h.iter_mut().zip(&f2) {
                *hv += fv;
            }
        }
        let hf = layer_norm(&h, t[self.layout.lnf_gain].data(), t[self.layout.lnf_bias].data());
        let mut logits = vec_mat(&hf, t[self.layout.head_w].data(), cfg.vocab);
        for (lv, &b) in logits.iter_mut().zip(t[self.layout.head_b].data()) {
            *lv += b;
        }
        self.pos += 1;
        Ok(logits)
    }
}

/// Logits for every music position computed one token at a time; same
/// contract as [`super::forward_logits`].
pub fn incremental_logits(params: &ModelParams, prompt: Prompt, prefix: &[usize]) -> Result<Vec<Vec<f64>>, ModelError> {
    let cfg = params.config();
    check_prompt(cfg, prompt)?;
    check_tokens(cfg, prefix)?;
    let mut dec = IncrementalDecoder::new(params);
    dec.push(cfg.genre_token(prompt.genre))?;
    let mut rows = vec![dec.push(cfg.mood_token(prompt.mood))?];
    for &tok in prefix {
        rows.push(dec.push(tok)?);
    }
    Ok(rows)
}

/// Draws a token from temperature-scaled, optionally top-k truncated logits.
pub fn sample_token(logits: &[f64], sampler: &SamplerConfig, rng: &mut Rng) -> usize {
    if sampler.temperature < GREEDY_TEMPERATURE {
        return argmax(logits);
    }
    let mut scaled: Vec<f64> = logits.iter().map(|&l| l / sampler.temperature).collect();
    if sampler.top_k > 0 && sampler.top_k < scaled.len() {
        let mut order: Vec<usize> = (0..scaled.len()).collect();
        order.sort_by(|&a, &b| scaled[b].total_cmp(&scaled[a]).then(a.cmp(&b)));
        for &i in &order[sampler.top_k..] {
            scaled[i] = f64::NEG_INFINITY;
        }
    }
    softmax_in_place(&mut scaled);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in scaled.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    scaled.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Ancestral sampling of a full `seq_len` music sequence.
pub fn generate(params: &ModelParams, prompt: Prompt, sampler: &SamplerConfig, rng: &mut Rng) -> Result<Vec<usize>, ModelError> {
    let cfg = params.config();
    check_prompt(cfg, prompt)?;
    sampler.validate(cfg.vocab)?;
    let mut dec = IncrementalDecoder::new(params);
    dec.push(cfg.genre_token(prompt.genre))?;
    let mut logits = dec.push(cfg.mood_token(prompt.mood))?;
    let mut out = Vec::with_capacity(cfg.seq_len);
    for i in 0..cfg.seq_len {
        let tok = sample_token(&logits, sampler, rng);
        out.push(tok);
        if i + 1 < cfg.seq_len {
            logits = dec.push(tok)?;
        }
    }
    Ok(out)
}
