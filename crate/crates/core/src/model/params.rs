use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError};
use crate::seed::{rng, ContentHasher};
use crate::Tensor;

const INIT_STD: f64 = 0.02;

/// Per-layer parameter indices into [`ModelParams::tensors`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerSlots {
    pub ln1_gain: usize,
    pub ln1_bias: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ln2_gain: usize,
    pub ln2_bias: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub layers: Vec<LayerSlots>,
    pub lnf_gain: usize,
    pub lnf_bias: usize,
    pub head_w: usize,
    pub head_b: usize,
}

#[derive(Clone, Copy)]
enum Init {
    Normal,
    Ones,
    Zeros,
}

fn specs(cfg: &ModelConfig) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let (d, ff) = (cfg.d_model, cfg.d_ff);
    let mut list: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        list.push((name, shape, init));
        list.len() - 1
    };
    let tok_emb = push("tok_emb".into(), vec![cfg.joint_vocab(), d], Init::Normal);
    let pos_emb = push("pos_emb".into(), vec![cfg.context_len(), d], Init::Normal);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        layers.push(LayerSlots {
            ln1_gain: push(p("ln1.gain"), vec![d], Init::Ones),
            ln1_bias: push(p("ln1.bias"), vec![d], Init::Zeros),
            wq: push(p("attn.wq"), vec![d, d], Init::Normal),
            wk: push(p("attn.wk"), vec![d, d], Init::Normal),
            wv: push(p("attn.wv"), vec![d, d], Init::Normal),
            wo: push(p("attn.wo"), vec![d, d], Init::Normal),
            ln2_gain: push(p("ln2.gain"), vec![d], Init::Ones),
            ln2_bias: push(p("ln2.bias"), vec![d], Init::Zeros),
            w1: push(p("ffn.w1"), vec![d, ff], Init::Normal),
            b1: push(p("ffn.b1"), vec![ff], Init::Zeros),
            w2: push(p("ffn.w2"), vec![ff, d], Init::Normal),
            b2: push(p("ffn.b2"), vec![d], Init::Zeros),
        });
    }
    let lnf_gain = push("lnf.gain".into(), vec![d], Init::Ones);
    let lnf_bias = push("lnf.bias".into(), vec![d], Init::Zeros);
    let head_w = push("head.w".into(), vec![d, cfg.vocab], Init::Zeros);
    let head_b = push("head.b".into(), vec![cfg.vocab], Init::Zeros);
    (
        Layout {
            tok_emb,
            pos_emb,
            layers,
            lnf_gain,
            lnf_bias,
            head_w,
            head_b,
        },
        list,
    )
}

/// All weights of the conditional transformer, in a fixed named order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Seeded initialization: N(0, 0.02²) weights and embeddings, unit
    /// layer-norm gains, zero biases, and a zero output head so an untrained
    /// model predicts the uniform distribution.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (_, list) = specs(config);
        let mut r = rng(config.init_seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut names = Vec::with_capacity(list.len());
        let mut tensors = Vec::with_capacity(list.len());
        for (name, shape, init) in list {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = match init {
                Init::Normal => (0..n).map(|_| normal.sample(&mut r)).collect(),
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
            };
            names.push(name);
            tensors.push(Tensor::new(shape, data)?);
        }
        Ok(Self {
            config: *config,
            names,
            tensors,
        })
    }

    /// Rebuilds params from named tensors, checking names and shapes against
    /// the layout implied by `config`.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        config.validate()?;
        let (_, list) = specs(&config);
        if list.len() != named.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                list.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(list.len());
        let mut tensors = Vec::with_capacity(list.len());
        for ((want_name, want_shape, _), (name, t)) in list.into_iter().zip(named) {
            if want_name != name || want_shape != t.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {name} {:?} does not match expected {want_name} {want_shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(ModelError::Checkpoint(format!("tensor {name} has non-finite entries")));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { config, names, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub(crate) fn layout(&self) -> Layout {
        specs(&self.config).0
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Largest absolute elementwise difference to another parameter set of the
    /// same layout.
    pub fn max_abs_delta(&self, other: &Self) -> f64 {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn content_hash(&self) -> String {
        let c = &self.config;
        let mut h = ContentHasher::new();
        h.usizes(&[c.d_model, c.n_heads, c.n_layers, c.d_ff, c.vocab, c.genres, c.moods, c.seq_len])
            .u64(c.init_seed);
        for (n, t) in self.names.iter().zip(&self.tensors) {
            h.str(n).usizes(t.shape()).f64s(t.data());
        }
        h.finish()
    }
}
