use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{clap_score, fit_gaussian, frechet_distance, kl_divergence, mean_distribution, MetricsError, Oracles};
use crate::dataset::{DatasetSplits, Pool, Prompt};
use crate::model::{generate, ModelParams, SamplerConfig};
use crate::seed::{rng, sub_seed};

/// Per-prompt token sequences.
pub type SequencePools = BTreeMap<Prompt, Vec<Vec<usize>>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Generations per prompt.
    pub n_gen: usize,
    pub temperature: f64,
    pub top_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_gen: 8,
            temperature: 1.0,
            top_k: 0,
        }
    }
}

/// One row of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub split: Pool,
    pub fad: f64,
    pub kl: f64,
    pub clap: f64,
    pub n_prompts: usize,
    pub n_gen: usize,
    pub n_ref: usize,
    pub embedder_hash: String,
    pub classifier_hash: String,
    pub encoder_hash: String,
}

pub const REPORT_CSV_HEADER: &str = "model,split,fad,kl,clap,n_prompts,n_gen,n_ref,embedder_hash,classifier_hash,encoder_hash";

impl MetricReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.split.as_str(),
            self.fad,
            self.kl,
            self.clap,
            self.n_prompts,
            self.n_gen,
            self.n_ref,
            self.embedder_hash,
            self.classifier_hash,
            self.encoder_hash
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self, MetricsError> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let bad = |what: &str| MetricsError::Malformed(format!("{what} in report row {line:?}"));
        if f.len() != 11 {
            return Err(bad("expected 11 fields"));
        }
        let split = match f[1] {
            "forget" => Pool::Forget,
            "remain" => Pool::Remain,
            _ => return Err(bad("unknown split")),
        };
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(what));
        Ok(Self {
            model: f[0].to_string(),
            split,
            fad: num(f[2], "fad")?,
            kl: num(f[3], "kl")?,
            clap: num(f[4], "clap")?,
            n_prompts: int(f[5], "n_prompts")?,
            n_gen: int(f[6], "n_gen")?,
            n_ref: int(f[7], "n_ref")?,
            embedder_hash: f[8].to_string(),
            classifier_hash: f[9].to_string(),
            encoder_hash: f[10].to_string(),
        })
    }
}

pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    writeln!(out, "{REPORT_CSV_HEADER}").expect("string write");
    for r in reports {
        writeln!(out, "{}", r.csv_row()).expect("string write");
    }
    out
}

pub fn reports_from_csv(text: &str) -> Result<Vec<MetricReport>, MetricsError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == REPORT_CSV_HEADER => {}
        _ => return Err(MetricsError::Malformed("missing report header".into())),
    }
    lines.filter(|l| !l.trim().is_empty()).map(MetricReport::from_csv_row).collect()
}

/// Mean over prompts of KL(mean reference class distribution ‖ mean
/// generated class distribution).
pub fn kl_metric(oracles: &Oracles, generated: &SequencePools, references: &SequencePools) -> Result<f64, MetricsError> {
    if generated.is_empty() {
        return Err(MetricsError::EmptyPool);
    }
    let mut total = 0.0;
    for (p, gens) in generated {
        let refs = references.get(p).filter(|r| !r.is_empty()).ok_or(MetricsError::MissingReferences(*p))?;
        if gens.is_empty() {
            return Err(MetricsError::EmptyPool);
        }
        let dist = |seqs: &[Vec<usize>]| -> Result<Vec<f64>, MetricsError> {
            let feats = oracles.embedder.embed_all(&sorted(seqs))?;
            mean_distribution(&oracles.classifier.predict_proba(&feats)?)
        };
        total += kl_divergence(&dist(refs)?, &dist(gens)?)?;
    }
    Ok(total / generated.len() as f64)
}

/// Sequences in a canonical order so every aggregate is independent of the
/// order they were supplied in.
fn sorted(seqs: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut s = seqs.to_vec();
    s.sort();
    s
}

fn pooled(pools: &SequencePools) -> Vec<Vec<usize>> {
    pools.values().flat_map(|v| sorted(v)).collect()
}

/// Scores given generations against the split's reference pools.
pub fn score_generations(
    oracles: &Oracles,
    splits: &DatasetSplits,
    split: Pool,
    model: &str,
    generated: &SequencePools,
) -> Result<MetricReport, MetricsError> {
    oracles.verify_frozen()?;
    if generated.is_empty() {
        return Err(MetricsError::EmptyPool);
    }
    let references: SequencePools = generated
        .keys()
        .map(|&p| {
            let r = splits.references(split, p);
            if r.is_empty() {
                Err(MetricsError::MissingReferences(p))
            } else {
                Ok((p, r.to_vec()))
            }
        })
        .collect::<Result<_, _>>()?;
    let gen_stats = fit_gaussian(&oracles.embedder.embed_all(&pooled(generated))?)?;
    let ref_stats = fit_gaussian(&oracles.embedder.embed_all(&pooled(&references))?)?;
    let fad = frechet_distance(&ref_stats, &gen_stats)?;
    let kl = kl_metric(oracles, generated, &references)?;
    let mut clap_total = 0.0;
    let mut n = 0usize;
    for (&p, gens) in generated {
        let feats = oracles.embedder.embed_all(&sorted(gens))?;
        let pe = oracles.encoder.encode_prompts(&[p])?.remove(0);
        for s in oracles.encoder.encode_sequences(&feats)? {
            clap_total += clap_score(&pe, &s);
            n += 1;
        }
    }
    Ok(MetricReport {
        model: model.to_string(),
        split,
        fad,
        kl,
        clap: clap_total / n as f64,
        n_prompts: generated.len(),
        n_gen: generated.values().map(Vec::len).max().unwrap_or(0),
        n_ref: references.values().map(Vec::len).sum(),
        embedder_hash: oracles.hashes.embedder.clone(),
        classifier_hash: oracles.hashes.classifier.clone(),
        encoder_hash: oracles.hashes.encoder.clone(),
    })
}

/// `n_gen` samples for each prompt. Each prompt's draws come from a stream
/// keyed by (seed, split, prompt), so every model sees the same randomness.
pub fn generate_pools(
    params: &ModelParams,
    prompts: &[Prompt],
    split: Pool,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SequencePools, MetricsError> {
    let sampler = SamplerConfig {
        temperature: cfg.temperature,
        top_k: cfg.top_k,
        seed,
    };
    let mut out = BTreeMap::new();
    for &p in prompts {
        let mut r = rng(sub_seed(seed, &format!("generate/{}/{}/{}", split.as_str(), p.genre, p.mood)));
        let seqs = (0..cfg.n_gen)
            .map(|_| generate(params, p, &sampler, &mut r))
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(p, seqs);
    }
    Ok(out)
}

/// Forget-split and remain-split reports for one model.
pub fn evaluate_model(
    params: &ModelParams,
    splits: &DatasetSplits,
    oracles: &Oracles,
    cfg: &EvalConfig,
    seed: u64,
    model: &str,
) -> Result<[MetricReport; 2], MetricsError> {
    if cfg.n_gen < 1 {
        return Err(MetricsError::InvalidConfig("n_gen must be positive".into()));
    }
    let run = |split: Pool| -> Result<MetricReport, MetricsError> {
        let prompts = splits.prompts_for(split);
        let generated = generate_pools(params, &prompts, split, cfg, seed)?;
        score_generations(oracles, splits, split, model, &generated)
    };
    Ok([run(Pool::Forget)?, run(Pool::Remain)?])
}
