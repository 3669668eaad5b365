use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AlignmentQuality, ClassifierConfig, DualEncoder, EncoderConfig, FeatureEmbedder, GenreClassifier, MetricsError};
use crate::dataset::{Prompt, WorldSpec};
use crate::seed::{rng, sub_seed};

pub const MIN_CLASSIFIER_ACCURACY: f64 = 0.9;
pub const MIN_ALIGNMENT_MARGIN: f64 = 0.1;
pub const MIN_RETRIEVAL: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub embed_dim: usize,
    /// Ground-truth sequences per prompt used to fit the classifier and encoder.
    pub train_per_prompt: usize,
    /// Held-out sequences per prompt for the quality gates.
    pub heldout_per_prompt: usize,
    pub classifier: ClassifierConfig,
    pub encoder: EncoderConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            train_per_prompt: 48,
            heldout_per_prompt: 16,
            classifier: ClassifierConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleQuality {
    pub classifier_accuracy: f64,
    pub alignment: AlignmentQuality,
}

impl OracleQuality {
    /// Human-readable descriptions of every failed gate.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.classifier_accuracy > MIN_CLASSIFIER_ACCURACY) {
            out.push(format!(
                "classifier held-out accuracy {:.3} ≤ {MIN_CLASSIFIER_ACCURACY}",
                self.classifier_accuracy
            ));
        }
        if !(self.alignment.margin() >= MIN_ALIGNMENT_MARGIN) {
            out.push(format!(
                "encoder matched-vs-mismatched margin {:.3} < {MIN_ALIGNMENT_MARGIN}",
                self.alignment.margin()
            ));
        }
        if !(self.alignment.retrieval >= MIN_RETRIEVAL) {
            out.push(format!("encoder retrieval {:.3} < {MIN_RETRIEVAL}", self.alignment.retrieval));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleHashes {
    pub embedder: String,
    pub classifier: String,
    pub encoder: String,
}

/// The frozen evaluators plus the hashes recorded right after training.
#[derive(Clone, Debug)]
pub struct Oracles {
    pub embedder: FeatureEmbedder,
    pub classifier: GenreClassifier,
    pub encoder: DualEncoder,
    pub quality: OracleQuality,
    pub hashes: OracleHashes,
}

impl Oracles {
    pub fn current_hashes(&self) -> OracleHashes {
        OracleHashes {
            embedder: self.embedder.content_hash(),
            classifier: self.classifier.content_hash(),
            encoder: self.encoder.content_hash(),
        }
    }

    pub fn verify_frozen(&self) -> Result<(), MetricsError> {
        let now = self.current_hashes();
        if now != self.hashes {
            return Err(MetricsError::OracleModified(format!("recorded {:?}, found {now:?}", self.hashes)));
        }
        Ok(())
    }
}

type Pools = BTreeMap<Prompt, Vec<Vec<f64>>>;

fn corpus(world: &WorldSpec, embedder: &FeatureEmbedder, per_prompt: usize, seed: u64) -> Result<Pools, MetricsError> {
    let mut r = rng(seed);
    let mut pools = BTreeMap::new();
    for p in world.prompts() {
        let chain = world.chain(p);
        let seqs: Vec<Vec<usize>> = (0..per_prompt).map(|_| chain.sample(world.seq_len(), &mut r)).collect();
        pools.insert(p, embedder.embed_all(&seqs)?);
    }
    Ok(pools)
}

fn labeled(pools: &Pools) -> (Vec<Vec<f64>>, Vec<usize>) {
    pools
        .iter()
        .flat_map(|(p, fs)| fs.iter().map(move |f| (f.clone(), p.genre)))
        .unzip()
}

/// Builds the embedder and trains classifier and encoder on fresh
/// ground-truth draws from `world`; quality is measured on a separate draw.
pub fn train_oracles(world: &WorldSpec, cfg: &OracleConfig, seed: u64) -> Result<Oracles, MetricsError> {
    if cfg.train_per_prompt == 0 || cfg.heldout_per_prompt == 0 {
        return Err(MetricsError::InvalidConfig("oracle corpora must be nonempty".into()));
    }
    let embedder = FeatureEmbedder::new(world.vocab(), cfg.embed_dim, sub_seed(seed, "oracle/embedder"))?;
    let train = corpus(world, &embedder, cfg.train_per_prompt, sub_seed(seed, "oracle/train-corpus"))?;
    let heldout = corpus(world, &embedder, cfg.heldout_per_prompt, sub_seed(seed, "oracle/heldout-corpus"))?;
    let (x, y) = labeled(&train);
    let classifier = GenreClassifier::train(&x, &y, world.genres(), &cfg.classifier, sub_seed(seed, "oracle/classifier"))?;
    let encoder = DualEncoder::train(&train, world.genres(), world.moods(), &cfg.encoder, sub_seed(seed, "oracle/encoder"))?;
    let (hx, hy) = labeled(&heldout);
    let quality = OracleQuality {
        classifier_accuracy: classifier.accuracy(&hx, &hy)?,
        alignment: encoder.quality(&heldout)?,
    };
    let hashes = OracleHashes {
        embedder: embedder.content_hash(),
        classifier: classifier.content_hash(),
        encoder: encoder.content_hash(),
    };
    Ok(Oracles {
        embedder,
        classifier,
        encoder,
        quality,
        hashes,
    })
}
