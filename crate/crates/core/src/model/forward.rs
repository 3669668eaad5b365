//! Tape-based forward pass used for training and likelihood evaluation.

use super::params::Layout;
use super::{ModelConfig, ModelError, ModelParams};
use crate::dataset::{PairedExample, Prompt};
use crate::numerics::NodeId;
use crate::{Graph, Tensor};

/// Evaluation batches are chunked to bound tape memory.
const EVAL_CHUNK: usize = 64;

pub(crate) fn check_prompt(cfg: &ModelConfig, p: Prompt) -> Result<(), ModelError> {
    if p.genre >= cfg.genres || p.mood >= cfg.moods {
        return Err(ModelError::InvalidPrompt {
            genre: p.genre,
            mood: p.mood,
        });
    }
    Ok(())
}

pub(crate) fn check_tokens(cfg: &ModelConfig, tokens: &[usize]) -> Result<(), ModelError> {
    if let Some(&t) = tokens.iter().find(|&&t| t >= cfg.vocab) {
        return Err(ModelError::TokenOutOfVocab { token: t, vocab: cfg.vocab });
    }
    Ok(())
}

/// Joint-vocabulary input ids: genre, mood, then the music prefix.
pub(crate) fn input_ids(cfg: &ModelConfig, prompt: Prompt, prefix: &[usize]) -> Vec<usize> {
    let mut ids = Vec::with_capacity(2 + prefix.len());
    ids.push(cfg.genre_token(prompt.genre));
    ids.push(cfg.mood_token(prompt.mood));
    ids.extend_from_slice(prefix);
    ids
}

/// Builds the forward pass for a batch of equal-length inputs and returns
/// the logits node (`batch·len × vocab`). Row 0 of each block is the genre
/// position; row `r ≥ 1` predicts music token `r − 1`.
pub(crate) fn build_logits(
    graph: &mut Graph,
    layout: &Layout,
    nodes: &[NodeId],
    cfg: &ModelConfig,
    inputs: &[Vec<usize>],
) -> Result<NodeId, ModelError> {
    let len = inputs[0].len();
    if inputs.iter().any(|i| i.len() != len) {
        return Err(ModelError::InvalidInput("batch inputs must share a length".into()));
    }
    if len > cfg.context_len() {
        return Err(ModelError::SequenceTooLong {
            len: len - 2,
            max: cfg.seq_len,
        });
    }
    let ids: Vec<usize> = inputs.iter().flatten().copied().collect();
    let positions: Vec<usize> = (0..inputs.len()).flat_map(|_| 0..len).collect();
    let tok = graph.embedding(nodes[layout.tok_emb], &ids)?;
    let pos = graph.embedding(nodes[layout.pos_emb], &positions)?;
    let mut h = graph.add(tok, pos)?;
    for l in &layout.layers {
        let a = graph.layer_norm(h, nodes[l.ln1_gain], nodes[l.ln1_bias])?;
        let q = graph.matmul(a, nodes[l.wq])?;
        let k = graph.matmul(a, nodes[l.wk])?;
        let v = graph.matmul(a, nodes[l.wv])?;
        let att = graph.causal_attention(q, k, v, len, cfg.n_heads)?;
        let o = graph.matmul(att, nodes[l.wo])?;
        h = graph.add(h, o)?;
        let b = graph.layer_norm(h, nodes[l.ln2_gain], nodes[l.ln2_bias])?;
        let f = graph.matmul(b, nodes[l.w1])?;
        let f = graph.add_bias(f, nodes[l.b1])?;
        let f = graph.gelu(f)?;
        let f = graph.matmul(f, nodes[l.w2])?;
        let f = graph.add_bias(f, nodes[l.b2])?;
        h = graph.add(h, f)?;
    }
    let hf = graph.layer_norm(h, nodes[layout.lnf_gain], nodes[layout.lnf_bias])?;
    let logits = graph.matmul(hf, nodes[layout.head_w])?;
    Ok(graph.add_bias(logits, nodes[layout.head_b])?)
}

/// Logits for every music position given a prompt and a music prefix:
/// `(prefix.len() + 1) × vocab`, row `t` being the distribution of token `t`.
pub fn forward_logits(params: &ModelParams, prompt: Prompt, prefix: &[usize]) -> Result<Tensor, ModelError> {
    let cfg = params.config();
    check_prompt(cfg, prompt)?;
    check_tokens(cfg, prefix)?;
    if prefix.len() > cfg.seq_len {
        return Err(ModelError::SequenceTooLong {
            len: prefix.len(),
            max: cfg.seq_len,
        });
    }
    let mut graph = Graph::new();
    let nodes: Vec<NodeId> = params.tensors().iter().map(|t| graph.constant(t.clone())).collect();
    let logits = build_logits(&mut graph, &params.layout(), &nodes, cfg, &[input_ids(cfg, prompt, prefix)])?;
    let all = graph.value(logits);
    let v = cfg.vocab;
    Ok(Tensor::matrix(all.rows() - 1, v, all.data()[v..].to_vec())?)
}

/// Teacher-forced logits for a whole example (`seq_len × vocab`).
pub fn teacher_forced_logits(params: &ModelParams, example: &PairedExample) -> Result<Tensor, ModelError> {
    let y = &example.tokens;
    if y.is_empty() {
        return Err(ModelError::InvalidInput("empty sequence".into()));
    }
    forward_logits(params, example.prompt, &y[..y.len() - 1])
}

fn validate_examples(cfg: &ModelConfig, batch: &[&PairedExample]) -> Result<(), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::InvalidInput("empty batch".into()));
    }
    for e in batch {
        check_prompt(cfg, e.prompt)?;
        check_tokens(cfg, &e.tokens)?;
        if e.tokens.len() != cfg.seq_len {
            return Err(ModelError::InvalidInput(format!(
                "sequence length {} ≠ model seq_len {}",
                e.tokens.len(),
                cfg.seq_len
            )));
        }
    }
    Ok(())
}

/// Cross-entropy targets and mask for a batch of full sequences.
fn targets_and_mask(batch: &[&PairedExample]) -> (Vec<usize>, Vec<bool>) {
    let mut targets = Vec::new();
    let mut mask = Vec::new();
    for e in batch {
        // genre position predicts the mood token: no loss
        targets.push(0);
        mask.push(false);
        for &t in &e.tokens {
            targets.push(t);
            mask.push(true);
        }
    }
    (targets, mask)
}

fn batch_graph(
    params: &ModelParams,
    batch: &[&PairedExample],
    trainable: bool,
) -> Result<(Graph, Vec<NodeId>, NodeId), ModelError> {
    let cfg = params.config();
    validate_examples(cfg, batch)?;
    let mut graph = Graph::new();
    let nodes: Vec<NodeId> = params
        .tensors()
        .iter()
        .map(|t| {
            if trainable {
                graph.param(t.clone())
            } else {
                graph.constant(t.clone())
            }
        })
        .collect();
    let inputs: Vec<Vec<usize>> = batch
        .iter()
        .map(|e| input_ids(cfg, e.prompt, &e.tokens[..e.tokens.len() - 1]))
        .collect();
    let logits = build_logits(&mut graph, &params.layout(), &nodes, cfg, &inputs)?;
    let (targets, mask) = targets_and_mask(batch);
    let loss = graph.cross_entropy(logits, &targets, &mask)?;
    Ok((graph, nodes, loss))
}

/// Mean per-token nll of a batch and its gradient for every parameter.
pub fn loss_and_grads(params: &ModelParams, batch: &[&PairedExample]) -> Result<(f64, Vec<Tensor>), ModelError> {
    let (graph, nodes, loss) = batch_graph(params, batch, true)?;
    let value = graph.value(loss).item();
    let mut grads = graph.backward(loss)?;
    let grads = nodes
        .iter()
        .map(|&n| grads.take_or_zeros(n))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((value, grads))
}

/// Mean nll in nats per music token of one example.
pub fn nll(params: &ModelParams, example: &PairedExample) -> Result<f64, ModelError> {
    mean_nll(params, std::slice::from_ref(example))
}

/// Mean per-token nll over a set of examples.
pub fn mean_nll(params: &ModelParams, examples: &[PairedExample]) -> Result<f64, ModelError> {
    let refs: Vec<&PairedExample> = examples.iter().collect();
    mean_nll_refs(params, &refs)
}

pub(crate) fn mean_nll_refs(params: &ModelParams, examples: &[&PairedExample]) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::InvalidInput("no examples".into()));
    }
    let mut total = 0.0;
    for chunk in examples.chunks(EVAL_CHUNK) {
        let (graph, _, loss) = batch_graph(params, chunk, false)?;
        total += graph.value(loss).item() * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}
