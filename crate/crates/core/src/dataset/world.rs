use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::{DatasetError, PairedExample, Prompt};
use crate::seed::{stream_rng, ContentHasher, Rng};

const MAX_ATTEMPTS: u64 = 64;
const MIN_TV_DISTANCE: f64 = 0.05;
const ROW_SUM_TOL: f64 = 1e-12;
/// Probability mass a row puts on its motif successor (or on re-entering the motif).
const MOTIF_WEIGHT: f64 = 0.75;
/// Probability of starting on a motif token.
const MOTIF_START: f64 = 0.8;
const NOISE_SPIKES: usize = 4;

/// Size overrides for [`build_world`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub vocab: usize,
    pub genres: usize,
    pub moods: usize,
    pub seq_len: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            vocab: 64,
            genres: 8,
            moods: 4,
            seq_len: 32,
        }
    }
}

/// The generating process: per-genre initial distributions and a
/// first-order transition matrix per (genre, mood).
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    vocab: usize,
    genres: usize,
    moods: usize,
    seq_len: usize,
    seed: u64,
    /// `genres × vocab`
    initial: Vec<f64>,
    /// `genres × moods × vocab × vocab`
    transitions: Vec<f64>,
}

/// Borrowed view of one Markov chain.
#[derive(Clone, Copy, Debug)]
pub struct Chain<'a> {
    pub initial: &'a [f64],
    pub matrix: &'a [f64],
    pub vocab: usize,
}

impl Chain<'_> {
    pub fn row(&self, token: usize) -> &[f64] {
        &self.matrix[token * self.vocab..(token + 1) * self.vocab]
    }

    pub fn sample(&self, len: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut tok = draw(self.initial, rng);
        out.push(tok);
        for _ in 1..len {
            tok = draw(self.row(tok), rng);
            out.push(tok);
        }
        out
    }
}

/// Inverse-CDF draw from a probability row.
pub(crate) fn draw(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the round-off gap above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl WorldSpec {
    /// Assembles a world from explicit tables, checking shapes and row
    /// normalization. No distinctness requirement: degenerate worlds (one
    /// genre, forced cycles, single-token vocabularies) are allowed here.
    pub fn from_parts(
        vocab: usize,
        genres: usize,
        moods: usize,
        seq_len: usize,
        seed: u64,
        initial: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        if vocab == 0 || genres == 0 || moods == 0 || seq_len == 0 {
            return Err(DatasetError::InvalidConfig("world dimensions must be positive".into()));
        }
        if initial.len() != genres * vocab || transitions.len() != genres * moods * vocab * vocab {
            return Err(DatasetError::InvalidConfig(format!(
                "table sizes {} / {} do not match vocab {vocab}, genres {genres}, moods {moods}",
                initial.len(),
                transitions.len()
            )));
        }
        check_stochastic(&initial, vocab, "initial distribution")?;
        check_stochastic(&transitions, vocab, "transition matrix")?;
        Ok(Self {
            vocab,
            genres,
            moods,
            seq_len,
            seed,
            initial,
            transitions,
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }
    pub fn genres(&self) -> usize {
        self.genres
    }
    pub fn moods(&self) -> usize {
        self.moods
    }
    pub fn seq_len(&self) -> usize {
        self.seq_len
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn initial_table(&self) -> &[f64] {
        &self.initial
    }
    pub fn transition_table(&self) -> &[f64] {
        &self.transitions
    }

    pub fn prompts(&self) -> impl Iterator<Item = Prompt> + '_ {
        (0..self.genres).flat_map(move |g| (0..self.moods).map(move |m| Prompt::new(g, m)))
    }

    pub fn check_prompt(&self, p: Prompt) -> Result<(), DatasetError> {
        if p.genre >= self.genres || p.mood >= self.moods {
            return Err(DatasetError::InvalidPrompt {
                genre: p.genre,
                mood: p.mood,
            });
        }
        Ok(())
    }

    pub fn initial(&self, genre: usize) -> &[f64] {
        &self.initial[genre * self.vocab..(genre + 1) * self.vocab]
    }

    pub fn matrix(&self, p: Prompt) -> &[f64] {
        let vv = self.vocab * self.vocab;
        let idx = p.genre * self.moods + p.mood;
        &self.transitions[idx * vv..(idx + 1) * vv]
    }

    pub fn chain(&self, p: Prompt) -> Chain<'_> {
        Chain {
            initial: self.initial(p.genre),
            matrix: self.matrix(p),
            vocab: self.vocab,
        }
    }

    pub fn content_hash(&self) -> String {
        ContentHasher::new()
            .usizes(&[self.vocab, self.genres, self.moods, self.seq_len])
            .u64(self.seed)
            .f64s(&self.initial)
            .f64s(&self.transitions)
            .finish()
    }
}

fn check_stochastic(table: &[f64], vocab: usize, what: &str) -> Result<(), DatasetError> {
    for (i, row) in table.chunks(vocab).enumerate() {
        let s: f64 = row.iter().sum();
        if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(DatasetError::InvalidConfig(format!(
                "{what} row {i} is not a probability distribution (sum {s})"
            )));
        }
    }
    Ok(())
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= s;
    }
}

/// Total-variation distance between two distributions.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Mean over rows of the TV distance between two `vocab × vocab` matrices.
pub fn mean_row_tv(a: &[f64], b: &[f64], vocab: usize) -> f64 {
    let rows = a.len() / vocab;
    a.chunks(vocab).zip(b.chunks(vocab)).map(|(x, y)| tv_distance(x, y)).sum::<f64>() / rows as f64
}

/// Sparse noise row: half uniform, half on a few random spikes.
fn noise_row(vocab: usize, rng: &mut Rng) -> Vec<f64> {
    let mut row = vec![0.5 / vocab as f64; vocab];
    let mut spikes: Vec<f64> = (0..NOISE_SPIKES).map(|_| Exp1.sample(rng)).collect();
    normalize(&mut spikes);
    for w in spikes {
        row[rng.random_range(0..vocab)] += 0.5 * w;
    }
    row
}

/// Builds a seeded world in which every genre favours its own cyclic motif
/// and each mood walks that motif with a different stride.
pub fn build_world(seed: u64, cfg: &WorldConfig) -> Result<WorldSpec, DatasetError> {
    let WorldConfig {
        vocab,
        genres,
        moods,
        seq_len,
    } = *cfg;
    if vocab < 8 || genres < 2 || moods < 1 || seq_len < 4 {
        return Err(DatasetError::InvalidConfig(format!(
            "need vocab ≥ 8, genres ≥ 2, moods ≥ 1, seq_len ≥ 4 (got {vocab}, {genres}, {moods}, {seq_len})"
        )));
    }
    let motif_len = (vocab / genres).clamp(2, 8);

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = stream_rng(seed, attempt);
        let mut perm: Vec<usize> = (0..vocab).collect();
        perm.shuffle(&mut rng);
        let motifs: Vec<Vec<usize>> = (0..genres)
            .map(|g| {
                if genres * motif_len <= vocab {
                    perm[g * motif_len..(g + 1) * motif_len].to_vec()
                } else {
                    let mut p: Vec<usize> = (0..vocab).collect();
                    p.shuffle(&mut rng);
                    p.truncate(motif_len);
                    p
                }
            })
            .collect();

        let mut initial = Vec::with_capacity(genres * vocab);
        for motif in &motifs {
            let mut row = vec![(1.0 - MOTIF_START) / vocab as f64; vocab];
            for &t in motif {
                row[t] += MOTIF_START / motif_len as f64;
            }
            normalize(&mut row);
            initial.extend(row);
        }

        let mut transitions = Vec::with_capacity(genres * moods * vocab * vocab);
        for motif in &motifs {
            for mood in 0..moods {
                let stride = 1 + mood % (motif_len - 1).max(1);
                let mut entry: Vec<f64> = (0..motif_len).map(|_| Exp1.sample(&mut rng)).collect();
                normalize(&mut entry);
                for t in 0..vocab {
                    let mut row: Vec<f64> = noise_row(vocab, &mut rng)
                        .into_iter()
                        .map(|v| v * (1.0 - MOTIF_WEIGHT))
                        .collect();
                    match motif.iter().position(|&m| m == t) {
                        Some(pos) => row[motif[(pos + stride) % motif_len]] += MOTIF_WEIGHT,
                        None => {
                            for (&m, &w) in motif.iter().zip(&entry) {
                                row[m] += MOTIF_WEIGHT * w;
                            }
                        }
                    }
                    normalize(&mut row);
                    transitions.extend(row);
                }
            }
        }

        let world = WorldSpec::from_parts(vocab, genres, moods, seq_len, seed, initial, transitions)?;
        if distinct_enough(&world) {
            return Ok(world);
        }
    }
    Err(DatasetError::RejectionCapExceeded(MAX_ATTEMPTS))
}

fn distinct_enough(world: &WorldSpec) -> bool {
    let prompts: Vec<Prompt> = world.prompts().collect();
    prompts.iter().enumerate().all(|(i, &a)| {
        prompts[i + 1..]
            .iter()
            .all(|&b| mean_row_tv(world.matrix(a), world.matrix(b), world.vocab) >= MIN_TV_DISTANCE)
    })
}

/// Smallest mean-row TV distance between any two (genre, mood) matrices.
pub fn min_pairwise_tv(world: &WorldSpec) -> f64 {
    let prompts: Vec<Prompt> = world.prompts().collect();
    let mut best = f64::INFINITY;
    for (i, &a) in prompts.iter().enumerate() {
        for &b in &prompts[i + 1..] {
            best = best.min(mean_row_tv(world.matrix(a), world.matrix(b), world.vocab));
        }
    }
    best
}

/// Draws one `(prompt, sequence)` pair from the world.
pub fn sample_pair(world: &WorldSpec, genre: usize, mood: usize, rng: &mut Rng) -> Result<PairedExample, DatasetError> {
    let prompt = Prompt::new(genre, mood);
    world.check_prompt(prompt)?;
    Ok(PairedExample {
        prompt,
        tokens: world.chain(prompt).sample(world.seq_len, rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    #[test]
    fn same_seed_same_world() {
        let cfg = WorldConfig::default();
        assert_eq!(build_world(9, &cfg).unwrap(), build_world(9, &cfg).unwrap());
        assert_ne!(build_world(9, &cfg).unwrap(), build_world(10, &cfg).unwrap());
    }

    #[test]
    fn minimal_world_is_distinct() {
        let cfg = WorldConfig {
            vocab: 8,
            genres: 2,
            moods: 1,
            seq_len: 4,
        };
        let w = build_world(1, &cfg).unwrap();
        assert_eq!(w.transition_table().len(), 2 * 8 * 8);
        assert!(min_pairwise_tv(&w) >= 0.05);
    }

    #[test]
    fn default_world_rows_normalized_and_distinct() {
        let w = build_world(3, &WorldConfig::default()).unwrap();
        for row in w.transition_table().chunks(w.vocab()) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
        assert!(min_pairwise_tv(&w) >= 0.05);
    }

    #[test]
    fn bad_configs_rejected() {
        for cfg in [
            WorldConfig { vocab: 7, ..Default::default() },
            WorldConfig { genres: 1, ..Default::default() },
            WorldConfig { moods: 0, ..Default::default() },
            WorldConfig { seq_len: 3, ..Default::default() },
        ] {
            assert!(matches!(build_world(0, &cfg), Err(DatasetError::InvalidConfig(_))));
        }
    }

    #[test]
    fn sample_pair_reproducible_and_validated() {
        let w = build_world(2, &WorldConfig::default()).unwrap();
        let a = sample_pair(&w, 3, 1, &mut rng(5)).unwrap();
        let b = sample_pair(&w, 3, 1, &mut rng(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tokens.len(), 32);
        assert!(matches!(
            sample_pair(&w, 8, 0, &mut rng(5)),
            Err(DatasetError::InvalidPrompt { .. })
        ));
        assert!(sample_pair(&w, 0, 4, &mut rng(5)).is_err());
    }

    #[test]
    fn forced_cycle_world() {
        let v = 5;
        let mut trans = vec![0.0; v * v];
        for t in 0..v {
            trans[t * v + (t + 1) % v] = 1.0;
        }
        let w = WorldSpec::from_parts(v, 1, 1, 12, 0, vec![0.2; v], trans).unwrap();
        let ex = sample_pair(&w, 0, 0, &mut rng(1)).unwrap();
        for pair in ex.tokens.windows(2) {
            assert_eq!(pair[1], (pair[0] + 1) % v);
        }
    }

    #[test]
    fn from_parts_rejects_unnormalized_rows() {
        assert!(WorldSpec::from_parts(2, 1, 1, 4, 0, vec![0.5, 0.5], vec![0.5, 0.6, 1.0, 0.0]).is_err());
        assert!(WorldSpec::from_parts(2, 1, 1, 4, 0, vec![0.5], vec![1.0, 0.0, 1.0, 0.0]).is_err());
    }
}
