//! Evaluation: Fréchet distance over frozen random-projection features,
//! prompt-averaged KL between class distributions from a frozen genre
//! classifier, and prompt–sequence cosine from a contrastive dual encoder.

mod classifier;
mod dual;
mod evaluate;
mod features;
mod frechet;
mod kl;
mod oracle;

use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::Prompt;
use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::seed::Rng;
use crate::Tensor;

pub use classifier::{ClassifierConfig, GenreClassifier};
pub use dual::{clap_score, AlignmentQuality, DualEncoder, EncoderConfig};
pub use evaluate::{
    evaluate_model, generate_pools, kl_metric, reports_from_csv, reports_to_csv, score_generations, EvalConfig, MetricReport,
    SequencePools, REPORT_CSV_HEADER,
};
pub use features::FeatureEmbedder;
pub use frechet::{fit_gaussian, frechet_distance, GaussianStats};
pub use kl::{kl_divergence, mean_distribution, KL_FLOOR};
pub use oracle::{
    train_oracles, OracleConfig, OracleHashes, OracleQuality, Oracles, MIN_ALIGNMENT_MARGIN, MIN_CLASSIFIER_ACCURACY,
    MIN_RETRIEVAL,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid metrics config: {0}")]
    InvalidConfig(String),
    #[error("empty sequence")]
    EmptySequence,
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { token: usize, vocab: usize },
    #[error("need at least 2 samples for a covariance, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Fréchet distance {0} is negative beyond round-off")]
    NegativeDistance(f64),
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("empty pool")]
    EmptyPool,
    #[error("no reference sequences for prompt {0:?}")]
    MissingReferences(Prompt),
    #[error("contrastive training needs at least 2 prompts, got {0}")]
    DegeneratePool(usize),
    #[error("frozen oracle weights changed: {0}")]
    OracleModified(String),
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `rows × cols` weight with N(0, 1/rows) entries.
fn init_weight(r: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let n = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("positive std");
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| n.sample(r)).collect()).expect("positive dims")
}
