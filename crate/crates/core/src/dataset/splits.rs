use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index::sample;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::world::{mean_row_tv, Chain, WorldSpec};
use super::{DatasetError, PairedExample, Prompt};
use crate::seed::{rng, stream_rng, sub_seed, ContentHasher};

pub const MIN_REFERENCES_PER_PROMPT: usize = 8;

/// How the forget set is drawn from the training set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForgetSelection {
    /// The first `n_forget` training items of the designated genre, topped
    /// up with random training items if that genre is too small.
    Genre,
    /// Uniformly random training items.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub n_train: usize,
    pub n_forget: usize,
    pub n_remain: usize,
    pub remain_shift: f64,
    pub refs_per_prompt: usize,
    pub forget_genre: usize,
    pub forget_selection: ForgetSelection,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_train: 4096,
            n_forget: 64,
            n_remain: 512,
            remain_shift: 0.3,
            refs_per_prompt: 16,
            forget_genre: 0,
            forget_selection: ForgetSelection::Genre,
        }
    }
}

/// Which reference pool a ground-truth sequence belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Forget,
    Remain,
}

impl Pool {
    pub fn as_str(self) -> &'static str {
        match self {
            Pool::Forget => "forget",
            Pool::Remain => "remain",
        }
    }
}

/// Train / forget / remain splits plus per-prompt reference pools.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplits {
    pub world: WorldSpec,
    pub remain_shift: f64,
    /// Shifted transition matrices generating the remain set, same layout as
    /// the world's table.
    pub remain_transitions: Vec<f64>,
    pub train: Vec<PairedExample>,
    /// Sorted, distinct indices into `train`.
    pub forget_indices: Vec<usize>,
    pub remain: Vec<PairedExample>,
    /// Ground-truth sequences per pool and prompt.
    pub references: BTreeMap<(Pool, Prompt), Vec<Vec<usize>>>,
}

impl DatasetSplits {
    pub fn forget_set(&self) -> Vec<PairedExample> {
        self.forget_indices.iter().map(|&i| self.train[i].clone()).collect()
    }

    pub fn forget_prompts(&self) -> Vec<Prompt> {
        let set: BTreeSet<Prompt> = self.forget_indices.iter().map(|&i| self.train[i].prompt).collect();
        set.into_iter().collect()
    }

    pub fn remain_prompts(&self) -> Vec<Prompt> {
        let set: BTreeSet<Prompt> = self.remain.iter().map(|e| e.prompt).collect();
        set.into_iter().collect()
    }

    pub fn prompts_for(&self, pool: Pool) -> Vec<Prompt> {
        match pool {
            Pool::Forget => self.forget_prompts(),
            Pool::Remain => self.remain_prompts(),
        }
    }

    pub fn references(&self, pool: Pool, prompt: Prompt) -> &[Vec<usize>] {
        self.references.get(&(pool, prompt)).map_or(&[], Vec::as_slice)
    }

    pub fn remain_matrix(&self, p: Prompt) -> &[f64] {
        let v = self.world.vocab();
        let idx = p.genre * self.world.moods() + p.mood;
        &self.remain_transitions[idx * v * v..(idx + 1) * v * v]
    }

    pub fn remain_chain(&self, p: Prompt) -> Chain<'_> {
        Chain {
            initial: self.world.initial(p.genre),
            matrix: self.remain_matrix(p),
            vocab: self.world.vocab(),
        }
    }

    /// Mean per-row TV distance between training and remain processes,
    /// averaged over prompts.
    pub fn remain_divergence(&self) -> f64 {
        let prompts: Vec<Prompt> = self.world.prompts().collect();
        prompts
            .iter()
            .map(|&p| mean_row_tv(self.world.matrix(p), self.remain_matrix(p), self.world.vocab()))
            .sum::<f64>()
            / prompts.len() as f64
    }

    pub fn content_hash(&self) -> String {
        let mut h = ContentHasher::new();
        h.str(&self.world.content_hash()).f64s(&[self.remain_shift]).f64s(&self.remain_transitions);
        for e in &self.train {
            h.str(&e.content_hash());
        }
        h.usizes(&self.forget_indices);
        for e in &self.remain {
            h.str(&e.content_hash());
        }
        for ((pool, p), seqs) in &self.references {
            h.str(pool.as_str()).usizes(&[p.genre, p.mood]);
            for s in seqs {
                h.usizes(s);
            }
        }
        h.finish()
    }

    /// Checks every structural invariant of the splits.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let w = &self.world;
        let check = |e: &PairedExample, what: &str| -> Result<(), DatasetError> {
            w.check_prompt(e.prompt)?;
            if e.tokens.len() != w.seq_len() {
                return Err(DatasetError::Invariant(format!("{what} sequence has length {}", e.tokens.len())));
            }
            if let Some(&t) = e.tokens.iter().find(|&&t| t >= w.vocab()) {
                return Err(DatasetError::TokenOutOfVocab { token: t, vocab: w.vocab() });
            }
            Ok(())
        };
        for e in &self.train {
            check(e, "train")?;
        }
        for e in &self.remain {
            check(e, "remain")?;
        }
        if self.forget_indices.is_empty() {
            return Err(DatasetError::Invariant("forget set is empty".into()));
        }
        if self.forget_indices.windows(2).any(|w| w[0] >= w[1])
            || self.forget_indices.iter().any(|&i| i >= self.train.len())
        {
            return Err(DatasetError::Invariant("forget indices must be sorted, distinct, and within train".into()));
        }
        if self.remain.is_empty() {
            return Err(DatasetError::EmptyRemain);
        }
        let train_hashes: HashSet<String> = self.train.iter().map(PairedExample::content_hash).collect();
        if self.remain.iter().any(|e| train_hashes.contains(&e.content_hash())) {
            return Err(DatasetError::Invariant("remain set overlaps train".into()));
        }
        for pool in [Pool::Forget, Pool::Remain] {
            for p in self.prompts_for(pool) {
                let refs = self.references(pool, p);
                if refs.len() < MIN_REFERENCES_PER_PROMPT {
                    return Err(DatasetError::Invariant(format!(
                        "{} pool for prompt ({}, {}) has {} references, need {MIN_REFERENCES_PER_PROMPT}",
                        pool.as_str(),
                        p.genre,
                        p.mood,
                        refs.len()
                    )));
                }
            }
        }
        for ((_, p), seqs) in &self.references {
            w.check_prompt(*p)?;
            for s in seqs {
                check(&PairedExample { prompt: *p, tokens: s.clone() }, "reference")?;
            }
        }
        Ok(())
    }
}

/// Materializes the splits for a world.
pub fn make_splits(world: &WorldSpec, cfg: &SplitConfig, seed: u64) -> Result<DatasetSplits, DatasetError> {
    if cfg.n_train == 0 || cfg.n_forget == 0 || cfg.n_forget > cfg.n_train {
        return Err(DatasetError::ForgetTooLarge {
            n_forget: cfg.n_forget,
            n_train: cfg.n_train,
        });
    }
    if cfg.n_remain == 0 {
        return Err(DatasetError::EmptyRemain);
    }
    if !(0.0..=1.0).contains(&cfg.remain_shift) {
        return Err(DatasetError::InvalidConfig(format!("remain_shift {} outside [0, 1]", cfg.remain_shift)));
    }
    if cfg.refs_per_prompt < MIN_REFERENCES_PER_PROMPT {
        return Err(DatasetError::InvalidConfig(format!(
            "refs_per_prompt must be at least {MIN_REFERENCES_PER_PROMPT}"
        )));
    }
    if cfg.forget_selection == ForgetSelection::Genre && cfg.forget_genre >= world.genres() {
        return Err(DatasetError::InvalidConfig(format!("forget genre {} not in world", cfg.forget_genre)));
    }
    let (g_count, m_count) = (world.genres(), world.moods());
    let n_prompts = (g_count * m_count) as u64;
    let prompt_of = |k: u64| Prompt::new((k / m_count as u64) as usize, (k % m_count as u64) as usize);
    let uniform_prompt = |r: &mut crate::seed::Rng| prompt_of(rand::Rng::random_range(r, 0..n_prompts));

    let train_seed = sub_seed(seed, "train");
    let train: Vec<PairedExample> = (0..cfg.n_train)
        .map(|i| {
            let mut r = stream_rng(train_seed, i as u64);
            let p = uniform_prompt(&mut r);
            PairedExample {
                prompt: p,
                tokens: world.chain(p).sample(world.seq_len(), &mut r),
            }
        })
        .collect();

    let mut pick_rng = rng(sub_seed(seed, "forget"));
    let forget_indices: Vec<usize> = match cfg.forget_selection {
        ForgetSelection::Random => {
            let mut idx = sample(&mut pick_rng, cfg.n_train, cfg.n_forget).into_vec();
            idx.sort_unstable();
            idx
        }
        ForgetSelection::Genre => {
            let mut chosen: BTreeSet<usize> = train
                .iter()
                .enumerate()
                .filter(|(_, e)| e.prompt.genre == cfg.forget_genre)
                .map(|(i, _)| i)
                .take(cfg.n_forget)
                .collect();
            if chosen.len() < cfg.n_forget {
                let rest: Vec<usize> = (0..cfg.n_train).filter(|i| !chosen.contains(i)).collect();
                let need = cfg.n_forget - chosen.len();
                for k in sample(&mut pick_rng, rest.len(), need) {
                    chosen.insert(rest[k]);
                }
            }
            chosen.into_iter().collect()
        }
    };

    // Shifted remain process: convex mix with a fresh random stochastic matrix.
    let v = world.vocab();
    let mut shift_rng = rng(sub_seed(seed, "remain-world"));
    let remain_transitions: Vec<f64> = world
        .transition_table()
        .chunks(v)
        .flat_map(|row| {
            let mut fresh: Vec<f64> = (0..v).map(|_| Exp1.sample(&mut shift_rng)).collect();
            let s: f64 = fresh.iter().sum();
            fresh.iter_mut().for_each(|x| *x /= s);
            let mixed: Vec<f64> = row
                .iter()
                .zip(&fresh)
                .map(|(&a, &b)| (1.0 - cfg.remain_shift) * a + cfg.remain_shift * b)
                .collect();
            let s: f64 = mixed.iter().sum();
            mixed.into_iter().map(move |x| x / s)
        })
        .collect();

    let mut splits = DatasetSplits {
        world: world.clone(),
        remain_shift: cfg.remain_shift,
        remain_transitions,
        train,
        forget_indices,
        remain: Vec::new(),
        references: BTreeMap::new(),
    };

    let train_hashes: HashSet<String> = splits.train.iter().map(PairedExample::content_hash).collect();
    let remain_seed = sub_seed(seed, "remain");
    let mut remain = Vec::with_capacity(cfg.n_remain);
    for i in 0..cfg.n_remain {
        let mut r = stream_rng(remain_seed, i as u64);
        let p = uniform_prompt(&mut r);
        loop {
            let e = PairedExample {
                prompt: p,
                tokens: splits.remain_chain(p).sample(world.seq_len(), &mut r),
            };
            if !train_hashes.contains(&e.content_hash()) {
                remain.push(e);
                break;
            }
        }
    }
    splits.remain = remain;

    let ref_seed = sub_seed(seed, "references");
    for pool in [Pool::Forget, Pool::Remain] {
        for p in splits.prompts_for(pool) {
            let stream = (pool as u64) << 32 | (p.genre * m_count + p.mood) as u64;
            let mut r = stream_rng(ref_seed, stream);
            let chain = match pool {
                Pool::Forget => world.chain(p),
                Pool::Remain => splits.remain_chain(p),
            };
            let seqs = (0..cfg.refs_per_prompt).map(|_| chain.sample(world.seq_len(), &mut r)).collect();
            splits.references.insert((pool, p), seqs);
        }
    }
    splits.validate()?;
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_world, WorldConfig};

    fn small_cfg() -> SplitConfig {
        SplitConfig {
            n_train: 256,
            n_forget: 16,
            n_remain: 64,
            ..Default::default()
        }
    }

    #[test]
    fn zero_shift_keeps_matrices() {
        let w = build_world(1, &WorldConfig::default()).unwrap();
        let s = make_splits(&w, &SplitConfig { remain_shift: 0.0, ..small_cfg() }, 4).unwrap();
        for (a, b) in s.remain_transitions.iter().zip(w.transition_table()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn genre_forget_selection() {
        let w = build_world(1, &WorldConfig::default()).unwrap();
        let s = make_splits(&w, &SplitConfig { forget_genre: 3, ..small_cfg() }, 4).unwrap();
        assert_eq!(s.forget_indices.len(), 16);
        assert!(s.forget_set().iter().all(|e| e.prompt.genre == 3));
    }

    #[test]
    fn fallback_when_genre_too_small() {
        let w = build_world(1, &WorldConfig::default()).unwrap();
        let cfg = SplitConfig {
            n_train: 40,
            n_forget: 40,
            ..small_cfg()
        };
        let s = make_splits(&w, &cfg, 4).unwrap();
        assert_eq!(s.forget_indices, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn single_genre_world_forgets_everything() {
        let v = 8;
        let trans: Vec<f64> = (0..v * v).map(|_| 1.0 / v as f64).collect();
        let w = WorldSpec::from_parts(v, 1, 1, 6, 0, vec![1.0 / v as f64; v], trans).unwrap();
        let cfg = SplitConfig {
            n_train: 20,
            n_forget: 20,
            n_remain: 5,
            ..small_cfg()
        };
        let s = make_splits(&w, &cfg, 2).unwrap();
        assert_eq!(s.forget_indices.len(), s.train.len());
    }

    #[test]
    fn errors() {
        let w = build_world(1, &WorldConfig::default()).unwrap();
        assert!(matches!(
            make_splits(&w, &SplitConfig { n_forget: 300, ..small_cfg() }, 0),
            Err(DatasetError::ForgetTooLarge { .. })
        ));
        assert!(matches!(
            make_splits(&w, &SplitConfig { n_remain: 0, ..small_cfg() }, 0),
            Err(DatasetError::EmptyRemain)
        ));
        assert!(make_splits(&w, &SplitConfig { remain_shift: 1.5, ..small_cfg() }, 0).is_err());
    }

    #[test]
    fn random_selection_is_subset() {
        let w = build_world(1, &WorldConfig::default()).unwrap();
        let cfg = SplitConfig {
            forget_selection: ForgetSelection::Random,
            ..small_cfg()
        };
        let s = make_splits(&w, &cfg, 9).unwrap();
        assert_eq!(s.forget_indices.len(), 16);
        s.validate().unwrap();
    }
}
