use rand_distr::{Distribution, StandardNormal};

use super::MetricsError;
use crate::seed::{rng, ContentHasher};
use crate::Tensor;

/// Frozen random projection of bigram and unigram frequencies.
///
/// The feature vector of a sequence is the bigram counts divided by the
/// number of bigrams, followed by the unigram counts divided by the length;
/// its embedding is `P · features` with `P` drawn i.i.d. N(0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEmbedder {
    vocab: usize,
    projection: Tensor,
}

impl FeatureEmbedder {
    pub fn new(vocab: usize, dim: usize, seed: u64) -> Result<Self, MetricsError> {
        if vocab == 0 || dim == 0 {
            return Err(MetricsError::InvalidConfig("embedder needs a positive vocabulary and dimension".into()));
        }
        let cols = vocab * vocab + vocab;
        let mut r = rng(seed);
        let data = (0..dim * cols).map(|_| StandardNormal.sample(&mut r)).collect();
        Ok(Self {
            vocab,
            projection: Tensor::matrix(dim, cols, data)?,
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn feature_len(&self) -> usize {
        self.projection.cols()
    }

    pub fn projection(&self) -> &Tensor {
        &self.projection
    }

    /// Sparse normalized count features as `(column, weight)` pairs.
    pub fn features(&self, tokens: &[usize]) -> Result<Vec<(usize, f64)>, MetricsError> {
        if tokens.is_empty() {
            return Err(MetricsError::EmptySequence);
        }
        let v = self.vocab;
        if let Some(&t) = tokens.iter().find(|&&t| t >= v) {
            return Err(MetricsError::TokenOutOfVocab { token: t, vocab: v });
        }
        let mut counts = std::collections::BTreeMap::new();
        let n_bigrams = tokens.len().saturating_sub(1);
        if n_bigrams > 0 {
            let w = 1.0 / n_bigrams as f64;
            for pair in tokens.windows(2) {
                *counts.entry(pair[0] * v + pair[1]).or_insert(0.0) += w;
            }
        }
        let w = 1.0 / tokens.len() as f64;
        for &t in tokens {
            *counts.entry(v * v + t).or_insert(0.0) += w;
        }
        Ok(counts.into_iter().collect())
    }

    pub fn embed(&self, tokens: &[usize]) -> Result<Vec<f64>, MetricsError> {
        let feats = self.features(tokens)?;
        let cols = self.feature_len();
        let p = self.projection.data();
        Ok((0..self.dim())
            .map(|i| {
                let row = &p[i * cols..(i + 1) * cols];
                feats.iter().map(|&(j, w)| row[j] * w).sum()
            })
            .collect())
    }

    pub fn embed_all(&self, seqs: &[Vec<usize>]) -> Result<Vec<Vec<f64>>, MetricsError> {
        seqs.iter().map(|s| self.embed(s)).collect()
    }

    pub fn content_hash(&self) -> String {
        ContentHasher::new()
            .usizes(&[self.vocab])
            .usizes(self.projection.shape())
            .f64s(self.projection.data())
            .finish()
    }
}
