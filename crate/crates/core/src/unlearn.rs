//! Gradient Ascent and Random Labeling unlearning of a forget set, with a
//! loss-explosion halt guard.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{PairedExample, Prompt};
use crate::model::{loss_and_grads, mean_nll_refs, ModelError, ModelParams};
use crate::numerics::{adam_step, Direction, StepOutcome};
use crate::seed::{rng, sub_seed, Rng};
use crate::AdamState;

#[derive(Debug, Error)]
pub enum UnlearnError {
    #[error("forget set is empty")]
    EmptyForgetSet,
    #[error("invalid unlearning config: {0}")]
    InvalidConfig(String),
    #[error("unknown unlearning method {0:?} (expected ga or rl)")]
    UnknownMethod(String),
    #[error("method mismatch: expected {expected}, config says {found}")]
    MethodMismatch { expected: Method, found: Method },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Gradient Ascent on the forget loss.
    Ga,
    /// Descent toward random targets for the forget prompts.
    Rl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ga => "ga",
            Method::Rl => "rl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = UnlearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ga" => Ok(Method::Ga),
            "rl" => Ok(Method::Rl),
            _ => Err(UnlearnError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelabelPolicy {
    /// One ỹ per forget example for the whole run.
    #[default]
    FixedPerSample,
    /// Fresh ỹ at the start of every pass over the forget set.
    ResampleEachEpoch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnConfig {
    pub method: Method,
    pub max_steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Halt when the tracked forget loss exceeds this; `None` means 3·ln V.
    #[serde(default)]
    pub explode_threshold: Option<f64>,
    #[serde(default)]
    pub relabel_policy: RelabelPolicy,
    pub seed: u64,
}

impl UnlearnConfig {
    /// Defaults for a method: GA 1000 steps, RL 200 steps, lr 1e-4, batch 6.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            max_steps: match method {
                Method::Ga => 1000,
                Method::Rl => 200,
            },
            lr: 1e-4,
            batch_size: 6,
            explode_threshold: None,
            relabel_policy: RelabelPolicy::FixedPerSample,
            seed: 0,
        }
    }

    pub fn threshold(&self, vocab: usize) -> f64 {
        self.explode_threshold.unwrap_or(3.0 * (vocab as f64).ln())
    }

    /// `max_steps = 0` is accepted and returns θ unchanged.
    pub fn validate(&self, vocab: usize) -> Result<(), UnlearnError> {
        let bad = |m: String| Err(UnlearnError::InvalidConfig(m));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr {} must be > 0", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let tau = self.threshold(vocab);
        if !(tau > (vocab as f64).ln()) {
            return bad(format!("explosion threshold {tau} must exceed ln V = {}", (vocab as f64).ln()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelabeledExample {
    pub prompt: Prompt,
    pub y_tilde: Vec<usize>,
}

impl RelabeledExample {
    pub fn to_example(&self) -> PairedExample {
        PairedExample::new(self.prompt, self.y_tilde.clone())
    }
}

/// Keeps every prompt and replaces its sequence with i.i.d. uniform tokens.
pub fn random_relabel(forget: &[PairedExample], vocab: usize, rng: &mut Rng) -> Result<Vec<RelabeledExample>, UnlearnError> {
    if forget.is_empty() {
        return Err(UnlearnError::EmptyForgetSet);
    }
    if vocab == 0 {
        return Err(UnlearnError::InvalidConfig("vocabulary must be nonempty".into()));
    }
    Ok(forget
        .iter()
        .map(|e| RelabeledExample {
            prompt: e.prompt,
            y_tilde: (0..e.tokens.len()).map(|_| rng.random_range(0..vocab)).collect(),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltReason {
    Budget,
    Explosion,
    NonFinite,
}

impl HaltReason {
    pub fn as_str(self) -> &'static str {
        match self {
            HaltReason::Budget => "budget",
            HaltReason::Explosion => "explosion",
            HaltReason::NonFinite => "non-finite",
        }
    }
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-step record of an unlearning run. For GA the tracked loss is the
/// forget-batch nll the step ascends; for RL it is the nll of the same batch
/// on the original (unrelabeled) targets. A step whose tracked loss trips a
/// guard is recorded with a zero update norm and no update.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnTrace {
    pub method: Method,
    pub forget_loss: Vec<f64>,
    pub update_norm: Vec<f64>,
    pub halt: HaltReason,
}

impl UnlearnTrace {
    pub fn steps(&self) -> usize {
        self.forget_loss.len()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,forget_loss,update_norm")?;
        for (i, (l, u)) in self.forget_loss.iter().zip(&self.update_norm).enumerate() {
            writeln!(out, "{i},{l},{u}")?;
        }
        writeln!(out, "# method={} halt={} steps={}", self.method, self.halt, self.steps())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Epoch-wise shuffled batch indices over `n` items.
struct Batcher {
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    rng: Rng,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Self {
        let mut b = Self {
            order: (0..n).collect(),
            cursor: 0,
            epoch: 0,
            rng: rng(seed),
        };
        b.order.shuffle(&mut b.rng);
        b
    }

    /// Next batch and whether it starts a new epoch (after the first).
    fn next(&mut self, size: usize) -> (Vec<usize>, bool) {
        let mut fresh_epoch = false;
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
                self.epoch += 1;
                if out.is_empty() {
                    fresh_epoch = true;
                }
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        (out, fresh_epoch)
    }
}

fn prepare(theta: &ModelParams, forget: &[PairedExample], cfg: &UnlearnConfig, method: Method) -> Result<(), UnlearnError> {
    if cfg.method != method {
        return Err(UnlearnError::MethodMismatch {
            expected: method,
            found: cfg.method,
        });
    }
    if forget.is_empty() {
        return Err(UnlearnError::EmptyForgetSet);
    }
    cfg.validate(theta.config().vocab)
}

fn guard(loss: f64, tau: f64) -> Option<HaltReason> {
    if !loss.is_finite() {
        Some(HaltReason::NonFinite)
    } else if loss > tau {
        Some(HaltReason::Explosion)
    } else {
        None
    }
}

/// Adam ascent on the mean forget-batch nll.
pub fn ga_unlearn(theta: &ModelParams, forget: &[PairedExample], cfg: &UnlearnConfig) -> Result<(ModelParams, UnlearnTrace), UnlearnError> {
    prepare(theta, forget, cfg, Method::Ga)?;
    let tau = cfg.threshold(theta.config().vocab);
    let mut params = theta.clone();
    let mut state = AdamState::new(params.tensors());
    let mut batcher = Batcher::new(forget.len(), sub_seed(cfg.seed, "unlearn/batches"));
    let mut trace = UnlearnTrace {
        method: Method::Ga,
        forget_loss: Vec::new(),
        update_norm: Vec::new(),
        halt: HaltReason::Budget,
    };
    for _ in 0..cfg.max_steps {
        let (idx, _) = batcher.next(cfg.batch_size);
        let batch: Vec<&PairedExample> = idx.iter().map(|&i| &forget[i]).collect();
        let (loss, grads) = loss_and_grads(&params, &batch)?;
        trace.forget_loss.push(loss);
        if let Some(h) = guard(loss, tau) {
            trace.update_norm.push(0.0);
            trace.halt = h;
            break;
        }
        match adam_step(params.tensors_mut(), &grads, &mut state, cfg.lr, Direction::Ascent).map_err(ModelError::from)? {
            StepOutcome::Applied { update_norm } => trace.update_norm.push(update_norm),
            StepOutcome::SkippedNonFinite => {
                trace.update_norm.push(0.0);
                trace.halt = HaltReason::NonFinite;
                break;
            }
        }
    }
    Ok((params, trace))
}

/// Adam descent toward random targets ỹ for the forget prompts.
pub fn rl_unlearn(theta: &ModelParams, forget: &[PairedExample], cfg: &UnlearnConfig) -> Result<(ModelParams, UnlearnTrace), UnlearnError> {
    prepare(theta, forget, cfg, Method::Rl)?;
    let vocab = theta.config().vocab;
    let tau = cfg.threshold(vocab);
    let mut label_rng = rng(sub_seed(cfg.seed, "unlearn/relabel"));
    let mut relabeled: Vec<PairedExample> = random_relabel(forget, vocab, &mut label_rng)?
        .iter()
        .map(RelabeledExample::to_example)
        .collect();
    let mut params = theta.clone();
    let mut state = AdamState::new(params.tensors());
    let mut batcher = Batcher::new(forget.len(), sub_seed(cfg.seed, "unlearn/batches"));
    let mut trace = UnlearnTrace {
        method: Method::Rl,
        forget_loss: Vec::new(),
        update_norm: Vec::new(),
        halt: HaltReason::Budget,
    };
    for _ in 0..cfg.max_steps {
        let (idx, fresh_epoch) = batcher.next(cfg.batch_size);
        if fresh_epoch && cfg.relabel_policy == RelabelPolicy::ResampleEachEpoch {
            relabeled = random_relabel(forget, vocab, &mut label_rng)?
                .iter()
                .map(RelabeledExample::to_example)
                .collect();
        }
        let original: Vec<&PairedExample> = idx.iter().map(|&i| &forget[i]).collect();
        let tracked = mean_nll_refs(&params, &original)?;
        trace.forget_loss.push(tracked);
        if let Some(h) = guard(tracked, tau) {
            trace.update_norm.push(0.0);
            trace.halt = h;
            break;
        }
        let batch: Vec<&PairedExample> = idx.iter().map(|&i| &relabeled[i]).collect();
        let (loss, grads) = loss_and_grads(&params, &batch)?;
        if !loss.is_finite() {
            trace.update_norm.push(0.0);
            trace.halt = HaltReason::NonFinite;
            break;
        }
        match adam_step(params.tensors_mut(), &grads, &mut state, cfg.lr, Direction::Descent).map_err(ModelError::from)? {
            StepOutcome::Applied { update_norm } => trace.update_norm.push(update_norm),
            StepOutcome::SkippedNonFinite => {
                trace.update_norm.push(0.0);
                trace.halt = HaltReason::NonFinite;
                break;
            }
        }
    }
    Ok((params, trace))
}

pub fn unlearn(theta: &ModelParams, forget: &[PairedExample], cfg: &UnlearnConfig) -> Result<(ModelParams, UnlearnTrace), UnlearnError> {
    match cfg.method {
        Method::Ga => ga_unlearn(theta, forget, cfg),
        Method::Rl => rl_unlearn(theta, forget, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_world, make_splits, DatasetSplits, SplitConfig, WorldConfig};
    use crate::model::{mean_nll, train, ModelConfig, TrainSchedule};

    fn setup() -> (DatasetSplits, ModelParams) {
        let world = build_world(
            2,
            &WorldConfig {
                vocab: 16,
                genres: 2,
                moods: 2,
                seq_len: 8,
            },
        )
        .unwrap();
        let splits = make_splits(
            &world,
            &SplitConfig {
                n_train: 128,
                n_forget: 12,
                n_remain: 8,
                refs_per_prompt: 8,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 32,
            ..ModelConfig::default()
        }
        .for_world(&world);
        let schedule = TrainSchedule {
            steps: 60,
            batch_size: 8,
            lr: 3e-3,
            seed: 0,
        };
        let theta = train(&ModelParams::init(&cfg).unwrap(), &splits.train, &schedule).unwrap().params;
        (splits, theta)
    }

    #[test]
    fn method_parsing() {
        assert_eq!("GA".parse::<Method>().unwrap(), Method::Ga);
        assert_eq!("rl".parse::<Method>().unwrap(), Method::Rl);
        assert!(matches!("prune".parse::<Method>(), Err(UnlearnError::UnknownMethod(_))));
    }

    #[test]
    fn vanishing_step_keeps_theta() {
        let (splits, theta) = setup();
        let f = splits.forget_set();
        let cfg = UnlearnConfig {
            max_steps: 1,
            lr: 1e-12,
            ..UnlearnConfig::new(Method::Ga)
        };
        let (after, trace) = ga_unlearn(&theta, &f, &cfg).unwrap();
        assert!(after.max_abs_delta(&theta) < 1e-8);
        assert!((mean_nll(&after, &f).unwrap() - mean_nll(&theta, &f).unwrap()).abs() < 1e-6);
        assert_eq!(trace.steps(), 1);
        assert_eq!(trace.halt, HaltReason::Budget);
    }

    #[test]
    fn zero_steps_is_identity() {
        let (splits, theta) = setup();
        let cfg = UnlearnConfig {
            max_steps: 0,
            ..UnlearnConfig::new(Method::Rl)
        };
        let (after, trace) = rl_unlearn(&theta, &splits.forget_set(), &cfg).unwrap();
        assert_eq!(after, theta);
        assert_eq!(trace.steps(), 0);
    }

    #[test]
    fn explosion_guard_halts_within_the_step() {
        let (splits, theta) = setup();
        let cfg = UnlearnConfig {
            max_steps: 500,
            lr: 1e-2,
            explode_threshold: Some(3.0),
            ..UnlearnConfig::new(Method::Ga)
        };
        let (_, trace) = ga_unlearn(&theta, &splits.forget_set(), &cfg).unwrap();
        assert_eq!(trace.halt, HaltReason::Explosion);
        let last = *trace.forget_loss.last().unwrap();
        assert!(last > 3.0);
        assert!(trace.forget_loss[..trace.steps() - 1].iter().all(|&l| l <= 3.0));
        assert_eq!(*trace.update_norm.last().unwrap(), 0.0);
    }

    #[test]
    fn dispatch_matches_direct_calls_and_leaves_theta() {
        let (splits, theta) = setup();
        let f = splits.forget_set();
        let before = theta.content_hash();
        for method in [Method::Ga, Method::Rl] {
            let cfg = UnlearnConfig {
                max_steps: 15,
                seed: 4,
                ..UnlearnConfig::new(method)
            };
            let (a, ta) = unlearn(&theta, &f, &cfg).unwrap();
            let (b, tb) = match method {
                Method::Ga => ga_unlearn(&theta, &f, &cfg).unwrap(),
                Method::Rl => rl_unlearn(&theta, &f, &cfg).unwrap(),
            };
            assert_eq!(a, b);
            assert_eq!(ta, tb);
            assert_ne!(a, theta);
        }
        assert_eq!(theta.content_hash(), before);
        let wrong = UnlearnConfig::new(Method::Rl);
        assert!(matches!(ga_unlearn(&theta, &f, &wrong), Err(UnlearnError::MethodMismatch { .. })));
        assert!(matches!(unlearn(&theta, &[], &wrong), Err(UnlearnError::EmptyForgetSet)));
    }

    #[test]
    fn rl_raises_original_nll() {
        let (splits, theta) = setup();
        let f = splits.forget_set();
        let cfg = UnlearnConfig {
            max_steps: 60,
            lr: 1e-3,
            ..UnlearnConfig::new(Method::Rl)
        };
        let (after, trace) = rl_unlearn(&theta, &f, &cfg).unwrap();
        assert!(mean_nll(&after, &f).unwrap() > mean_nll(&theta, &f).unwrap());
        let (again, trace2) = rl_unlearn(&theta, &f, &cfg).unwrap();
        assert_eq!(after, again);
        assert_eq!(trace, trace2);
        let resample = UnlearnConfig {
            relabel_policy: RelabelPolicy::ResampleEachEpoch,
            ..cfg
        };
        let (other, _) = rl_unlearn(&theta, &f, &resample).unwrap();
        assert_ne!(other, after);
    }

    #[test]
    fn single_token_vocab_relabel_is_identity() {
        let f = vec![PairedExample::new(Prompt::new(0, 0), vec![0; 5])];
        let r = random_relabel(&f, 1, &mut rng(0)).unwrap();
        assert_eq!(r[0].y_tilde, f[0].tokens);
        assert_eq!(r[0].prompt, f[0].prompt);
        assert!(random_relabel(&[], 4, &mut rng(0)).is_err());
    }

    #[test]
    fn config_validation() {
        let c = UnlearnConfig::new(Method::Ga);
        assert!((c.threshold(64) - 3.0 * 64f64.ln()).abs() < 1e-15);
        assert!(c.validate(64).is_ok());
        assert!(UnlearnConfig { lr: 0.0, ..c }.validate(64).is_err());
        assert!(UnlearnConfig {
            explode_threshold: Some(4.0),
            ..c
        }
        .validate(64)
        .is_err());
    }

    #[test]
    fn trace_csv_format() {
        let t = UnlearnTrace {
            method: Method::Ga,
            forget_loss: vec![1.5, 2.25],
            update_norm: vec![0.125, 0.0],
            halt: HaltReason::Explosion,
        };
        assert_eq!(
            t.to_csv(),
            "step,forget_loss,update_norm\n0,1.5,0.125\n1,2.25,0\n# method=ga halt=explosion steps=2\n"
        );
    }

    #[test]
    fn batcher_covers_each_epoch() {
        let mut b = Batcher::new(7, 1);
        let mut seen = Vec::new();
        for _ in 0..7 {
            seen.extend(b.next(1).0);
        }
        seen.sort();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
        let (_, fresh) = b.next(3);
        assert!(fresh);
    }
}
