use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dataset::{SplitConfig, WorldConfig, WorldSpec};
use crate::metrics::{EvalConfig, OracleConfig};
use crate::model::{ModelConfig, TrainSchedule};
use crate::seed::{sha256_hex, sub_seed};
use crate::unlearn::{Method, RelabelPolicy, UnlearnConfig};

/// Transformer sizes; vocabulary and sequence sizes come from the world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            d_ff: m.d_ff,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainSchedule::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
        }
    }
}

/// Unlearning overrides; unset fields take the method's defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnlearnSection {
    pub max_steps: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub explode_threshold: Option<f64>,
    pub relabel_policy: Option<RelabelPolicy>,
}

/// Everything one experiment needs. All randomness derives from `seed`
/// through tagged sub-seeds (see [`ExperimentConfig::sub_seed`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub world: WorldConfig,
    pub splits: SplitConfig,
    pub model: ArchConfig,
    pub train: TrainSection,
    pub ga: UnlearnSection,
    pub rl: UnlearnSection,
    pub eval: EvalConfig,
    pub oracles: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            world: WorldConfig::default(),
            splits: SplitConfig::default(),
            model: ArchConfig::default(),
            train: TrainSection::default(),
            ga: UnlearnSection::default(),
            rl: UnlearnSection::default(),
            eval: EvalConfig::default(),
            oracles: OracleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|_| HarnessError::MissingArtifact(path.to_path_buf()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the canonical serialization.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())[..16].to_string()
    }

    /// `first 8 bytes of sha256(seed_le ‖ tag)` as a little-endian u64.
    pub fn sub_seed(&self, tag: &str) -> u64 {
        sub_seed(self.seed, tag)
    }

    pub fn model_config(&self, world: &WorldSpec) -> ModelConfig {
        ModelConfig {
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            n_layers: self.model.n_layers,
            d_ff: self.model.d_ff,
            init_seed: self.sub_seed("model/init"),
            ..ModelConfig::default()
        }
        .for_world(world)
    }

    pub fn train_schedule(&self) -> TrainSchedule {
        TrainSchedule {
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            seed: self.sub_seed("model/train"),
        }
    }

    pub fn unlearn_config(&self, method: Method) -> UnlearnConfig {
        let s = match method {
            Method::Ga => &self.ga,
            Method::Rl => &self.rl,
        };
        let d = UnlearnConfig::new(method);
        UnlearnConfig {
            method,
            max_steps: s.max_steps.unwrap_or(d.max_steps),
            lr: s.lr.unwrap_or(d.lr),
            batch_size: s.batch_size.unwrap_or(d.batch_size),
            explode_threshold: s.explode_threshold.or(d.explode_threshold),
            relabel_policy: s.relabel_policy.unwrap_or(d.relabel_policy),
            seed: self.sub_seed(&format!("unlearn/{method}")),
        }
    }

    /// Checks every section before any stage runs.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let w = &self.world;
        if w.vocab < 8 || w.genres < 2 || w.moods < 1 || w.seq_len < 4 {
            return bad("world needs vocab ≥ 8, genres ≥ 2, moods ≥ 1, seq_len ≥ 4".into());
        }
        let s = &self.splits;
        if s.n_train == 0 || s.n_forget == 0 || s.n_remain == 0 {
            return bad("split sizes must be positive".into());
        }
        if s.n_forget > s.n_train {
            return bad(format!("n_forget {} exceeds n_train {}", s.n_forget, s.n_train));
        }
        if !(0.0..=1.0).contains(&s.remain_shift) {
            return bad(format!("remain_shift {} outside [0, 1]", s.remain_shift));
        }
        if s.forget_genre >= w.genres {
            return bad(format!("forget_genre {} outside [0, {})", s.forget_genre, w.genres));
        }
        let model = ModelConfig {
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            n_layers: self.model.n_layers,
            d_ff: self.model.d_ff,
            vocab: w.vocab,
            genres: w.genres,
            moods: w.moods,
            seq_len: w.seq_len,
            init_seed: 0,
        };
        model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.train_schedule().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        for m in [Method::Ga, Method::Rl] {
            self.unlearn_config(m)
                .validate(w.vocab)
                .map_err(|e| HarnessError::Config(format!("[{m}] {e}")))?;
        }
        if self.eval.n_gen < 2 {
            return bad("eval.n_gen must be at least 2".into());
        }
        if !(self.eval.temperature > 0.0) || self.eval.top_k > w.vocab {
            return bad("eval needs temperature > 0 and top_k ≤ vocab".into());
        }
        let o = &self.oracles;
        if o.embed_dim == 0 || o.train_per_prompt == 0 || o.heldout_per_prompt == 0 {
            return bad("oracle sizes must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_sections_keep_method_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\n[ga]\nlr = 0.001\n[rl]\nrelabel_policy = \"resample-each-epoch\"\n").unwrap();
        let ga = cfg.unlearn_config(Method::Ga);
        assert_eq!((ga.max_steps, ga.lr, ga.batch_size), (1000, 1e-3, 6));
        let rl = cfg.unlearn_config(Method::Rl);
        assert_eq!(rl.max_steps, 200);
        assert_eq!(rl.relabel_policy, RelabelPolicy::ResampleEachEpoch);
        assert_ne!(ga.seed, rl.seed);
        assert_eq!(cfg.world, WorldConfig::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("sed = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nsteps = \"many\"\n").is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.model.n_heads = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.ga.explode_threshold = Some(1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.splits.n_forget = 5000;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sub_seeds_depend_on_master_and_tag() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { seed: 1, ..a.clone() };
        assert_ne!(a.sub_seed("world"), b.sub_seed("world"));
        assert_ne!(a.sub_seed("world"), a.sub_seed("splits"));
        assert_eq!(a.sub_seed("world"), sub_seed(0, "world"));
    }
}
