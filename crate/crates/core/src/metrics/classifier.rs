use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{init_weight, MetricsError};
use crate::numerics::{adam_step, Direction, NodeId};
use crate::seed::{rng, ContentHasher};
use crate::{AdamState, Graph, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            steps: 600,
            batch_size: 64,
            lr: 3e-3,
        }
    }
}

/// Layer norm → dense → GELU → dense → softmax over genres, applied to
/// feature embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct GenreClassifier {
    genres: usize,
    params: Vec<Tensor>,
}

const LN_GAIN: usize = 0;
const LN_BIAS: usize = 1;
const W1: usize = 2;
const B1: usize = 3;
const W2: usize = 4;
const B2: usize = 5;

fn logits(graph: &mut Graph, p: &[NodeId], x: NodeId) -> Result<NodeId, MetricsError> {
    let h = graph.layer_norm(x, p[LN_GAIN], p[LN_BIAS])?;
    let h = graph.matmul(h, p[W1])?;
    let h = graph.add_bias(h, p[B1])?;
    let h = graph.gelu(h)?;
    let h = graph.matmul(h, p[W2])?;
    Ok(graph.add_bias(h, p[B2])?)
}

fn stack(rows: &[&Vec<f64>]) -> Result<Tensor, MetricsError> {
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(MetricsError::DimensionMismatch("feature vectors differ in length".into()));
    }
    Ok(Tensor::matrix(rows.len(), d, rows.iter().flat_map(|r| r.iter().copied()).collect())?)
}

impl GenreClassifier {
    /// Fits on `(feature, genre)` pairs with Adam on minibatches drawn with
    /// replacement.
    pub fn train(features: &[Vec<f64>], labels: &[usize], genres: usize, cfg: &ClassifierConfig, seed: u64) -> Result<Self, MetricsError> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(MetricsError::InvalidConfig("classifier needs equally many features and labels".into()));
        }
        if genres < 2 || labels.iter().any(|&l| l >= genres) {
            return Err(MetricsError::InvalidConfig(format!("labels must lie in [0, {genres}) with at least 2 genres")));
        }
        if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
            return Err(MetricsError::InvalidConfig("classifier hidden, batch_size and lr must be positive".into()));
        }
        let d = features[0].len();
        let mut r = rng(seed);
        let mut params = vec![
            Tensor::filled(&[d], 1.0),
            Tensor::zeros(&[d]),
            init_weight(&mut r, d, cfg.hidden),
            Tensor::zeros(&[cfg.hidden]),
            init_weight(&mut r, cfg.hidden, genres),
            Tensor::zeros(&[genres]),
        ];
        let mut state = AdamState::new(&params);
        for _ in 0..cfg.steps {
            let idx: Vec<usize> = (0..cfg.batch_size).map(|_| r.random_range(0..features.len())).collect();
            let rows: Vec<&Vec<f64>> = idx.iter().map(|&i| &features[i]).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::new();
            let nodes: Vec<NodeId> = params.iter().map(|t| g.param(t.clone())).collect();
            let x = g.constant(stack(&rows)?);
            let out = logits(&mut g, &nodes, x)?;
            let loss = g.cross_entropy(out, &targets, &vec![true; targets.len()])?;
            let mut grads = g.backward(loss)?;
            let grads = nodes.iter().map(|&n| grads.take_or_zeros(n)).collect::<Result<Vec<_>, _>>()?;
            adam_step(&mut params, &grads, &mut state, cfg.lr, Direction::Descent)?;
        }
        Ok(Self { genres, params })
    }

    pub fn genres(&self) -> usize {
        self.genres
    }

    /// Genre probabilities for each feature vector.
    pub fn predict_proba(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MetricsError> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<&Vec<f64>> = features.iter().collect();
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = self.params.iter().map(|t| g.constant(t.clone())).collect();
        let x = g.constant(stack(&rows)?);
        let out = logits(&mut g, &nodes, x)?;
        let probs = g.value(out).softmax()?;
        Ok(probs.data().chunks(self.genres).map(<[f64]>::to_vec).collect())
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> Result<f64, MetricsError> {
        let probs = self.predict_proba(features)?;
        let hits = probs
            .iter()
            .zip(labels)
            .filter(|(p, &l)| argmax(p) == l)
            .count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }

    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        h.usizes(&[self.genres]);
        for t in &self.params {
            h.usizes(t.shape()).f64s(t.data());
        }
        h.finish()
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}
