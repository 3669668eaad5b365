use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::table::{method_label, render_latex_rows, render_report, trend_verdicts, verdicts_to_csv, Verdict, ORIGINAL};
use super::{ExperimentConfig, HarnessError};
use crate::dataset::{build_world, load_splits, make_splits, save_splits, DatasetSplits, Pool, FORMAT_VERSION};
use crate::metrics::{evaluate_model, reports_from_csv, reports_to_csv, train_oracles, MetricReport, OracleHashes, OracleQuality};
use crate::model::{load_checkpoint, save_checkpoint, train_with_progress, ModelParams, CHECKPOINT_VERSION};
use crate::seed::sha256_hex;
use crate::unlearn::{unlearn, Method, UnlearnTrace};

/// File locations under the output directory.
#[derive(Clone, Debug)]
pub struct ArtifactPaths {
    root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn splits(&self) -> PathBuf {
        self.root.join("data/splits.jsonl")
    }

    pub fn checkpoint(&self, label: &str) -> PathBuf {
        self.root.join(format!("checkpoints/{}.ckpt", label.to_ascii_lowercase()))
    }

    pub fn trace(&self, label: &str) -> PathBuf {
        self.root.join(format!("traces/{}.csv", label.to_ascii_lowercase()))
    }

    pub fn oracles(&self) -> PathBuf {
        self.root.join("reports/oracles.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("reports/metrics.csv")
    }

    pub fn tables(&self) -> PathBuf {
        self.root.join("reports/tables.md")
    }

    pub fn latex(&self) -> PathBuf {
        self.root.join("reports/tables.tex")
    }

    pub fn verdicts(&self) -> PathBuf {
        self.root.join("reports/verdicts.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    /// Every artifact a complete run produces, in manifest order.
    pub fn all(&self) -> Vec<PathBuf> {
        vec![
            self.config(),
            self.splits(),
            self.checkpoint(ORIGINAL),
            self.trace("train"),
            self.checkpoint("GA"),
            self.trace("GA"),
            self.checkpoint("RL"),
            self.trace("RL"),
            self.oracles(),
            self.metrics(),
            self.tables(),
            self.latex(),
            self.verdicts(),
        ]
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn require(path: &Path) -> Result<(), HarnessError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(HarnessError::MissingArtifact(path.to_path_buf()))
    }
}

pub fn file_sha256(path: &Path) -> Result<String, HarnessError> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub dataset_format: u32,
    pub checkpoint_format: u32,
    pub crate_version: String,
    pub artifacts: Vec<ManifestEntry>,
}

/// Hashes every artifact present on disk and writes `manifest.json`.
pub fn write_manifest(cfg: &ExperimentConfig) -> Result<Manifest, HarnessError> {
    let paths = ArtifactPaths::new(&cfg.output_dir);
    let mut artifacts = Vec::new();
    for p in paths.all() {
        if p.is_file() {
            let rel = p.strip_prefix(paths.root()).unwrap_or(&p);
            artifacts.push(ManifestEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: file_sha256(&p)?,
                bytes: fs::metadata(&p)?.len(),
            });
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        dataset_format: FORMAT_VERSION,
        checkpoint_format: CHECKPOINT_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&paths.manifest(), json + "\n")?;
    Ok(manifest)
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T, HarnessError>) -> Result<T, HarnessError> {
    eprintln!("[{name}] start");
    let out = f().map_err(|e| e.in_stage(name))?;
    eprintln!("[{name}] done");
    Ok(out)
}

/// World, splits and reference pools → `data/splits.jsonl`.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<DatasetSplits, HarnessError> {
    cfg.validate()?;
    stage("gen-data", || {
        let paths = ArtifactPaths::new(&cfg.output_dir);
        write(&paths.config(), cfg.to_toml())?;
        let world = build_world(cfg.sub_seed("world"), &cfg.world)?;
        let splits = make_splits(&world, &cfg.splits, cfg.sub_seed("splits"))?;
        save_splits(&splits, &paths.splits())?;
        Ok(splits)
    })
}

fn load_data(paths: &ArtifactPaths) -> Result<DatasetSplits, HarnessError> {
    require(&paths.splits())?;
    Ok(load_splits(&paths.splits())?)
}

/// Base training → `checkpoints/original.ckpt` and `traces/train.csv`.
pub fn train_original(cfg: &ExperimentConfig) -> Result<(ModelParams, Vec<f64>), HarnessError> {
    cfg.validate()?;
    let paths = ArtifactPaths::new(&cfg.output_dir);
    let splits = load_data(&paths)?;
    stage("train", || {
        let init = ModelParams::init(&cfg.model_config(&splits.world))?;
        let schedule = cfg.train_schedule();
        let every = (schedule.steps / 10).max(1);
        let out = train_with_progress(&init, &splits.train, &schedule, |step, loss| {
            if (step + 1) % every == 0 {
                eprintln!("[train] step {:>5}/{} loss {loss:.4}", step + 1, schedule.steps);
            }
        })?;
        save_checkpoint(&paths.checkpoint(ORIGINAL), &out.params)?;
        let mut csv = String::from("step,loss\n");
        for (i, l) in out.losses.iter().enumerate() {
            csv.push_str(&format!("{i},{l}\n"));
        }
        write(&paths.trace("train"), csv)?;
        Ok((out.params, out.losses))
    })
}

/// Unlearning from the persisted Original checkpoint, whose bytes are
/// verified unchanged afterwards.
pub fn run_unlearning(cfg: &ExperimentConfig, method: Method) -> Result<(ModelParams, UnlearnTrace), HarnessError> {
    cfg.validate()?;
    let paths = ArtifactPaths::new(&cfg.output_dir);
    let splits = load_data(&paths)?;
    let original_path = paths.checkpoint(ORIGINAL);
    require(&original_path)?;
    let name = match method {
        Method::Ga => "unlearn-ga",
        Method::Rl => "unlearn-rl",
    };
    stage(name, || {
        let before = file_sha256(&original_path)?;
        let theta = load_checkpoint(&original_path)?;
        let (unlearned, trace) = unlearn(&theta, &splits.forget_set(), &cfg.unlearn_config(method))?;
        let label = method_label(method);
        save_checkpoint(&paths.checkpoint(label), &unlearned)?;
        write(&paths.trace(label), trace.to_csv())?;
        if file_sha256(&original_path)? != before {
            return Err(HarnessError::OriginalModified);
        }
        eprintln!("[{name}] {} steps, halt = {}", trace.steps(), trace.halt);
        Ok((unlearned, trace))
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRecord {
    pub quality: OracleQuality,
    pub hashes: OracleHashes,
    pub gate_failures: Vec<String>,
}

/// Trains the frozen oracles, enforces their quality gates, and scores the
/// three checkpoints → `reports/metrics.csv`.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Vec<MetricReport>, HarnessError> {
    cfg.validate()?;
    let paths = ArtifactPaths::new(&cfg.output_dir);
    let splits = load_data(&paths)?;
    let labels = [ORIGINAL, "GA", "RL"];
    for l in labels {
        require(&paths.checkpoint(l))?;
    }
    stage("evaluate", || {
        let oracles = train_oracles(&splits.world, &cfg.oracles, cfg.sub_seed("oracles"))?;
        let failures = oracles.quality.failures();
        let record = OracleRecord {
            quality: oracles.quality,
            hashes: oracles.hashes.clone(),
            gate_failures: failures.clone(),
        };
        write(&paths.oracles(), serde_json::to_string_pretty(&record).expect("serializes") + "\n")?;
        if !failures.is_empty() {
            return Err(HarnessError::QualityGate(failures));
        }
        let mut reports = Vec::with_capacity(6);
        for l in labels {
            let params = load_checkpoint(&paths.checkpoint(l))?;
            reports.extend(evaluate_model(&params, &splits, &oracles, &cfg.eval, cfg.sub_seed("eval"), l)?);
        }
        write(&paths.metrics(), reports_to_csv(&reports))?;
        Ok(reports)
    })
}

/// Tables and verdicts regenerated from `reports/metrics.csv` alone.
pub fn report(cfg: &ExperimentConfig) -> Result<(Vec<MetricReport>, Vec<Verdict>), HarnessError> {
    let paths = ArtifactPaths::new(&cfg.output_dir);
    require(&paths.metrics())?;
    stage("report", || {
        let reports = reports_from_csv(&fs::read_to_string(paths.metrics())?)?;
        let verdicts = trend_verdicts(&reports)?;
        write(&paths.tables(), render_report(&reports, &verdicts)?)?;
        let mut tex = String::new();
        for split in [Pool::Forget, Pool::Remain] {
            tex.push_str(&render_latex_rows(&reports, split)?);
            tex.push('\n');
        }
        write(&paths.latex(), tex)?;
        write(&paths.verdicts(), verdicts_to_csv(&verdicts))?;
        write_manifest(cfg)?;
        Ok((reports, verdicts))
    })
}

/// Outputs of a full run.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub reports: Vec<MetricReport>,
    pub verdicts: Vec<Verdict>,
    pub train_losses: Vec<f64>,
    pub ga_trace: UnlearnTrace,
    pub rl_trace: UnlearnTrace,
    pub checkpoints: [PathBuf; 3],
    pub original_hash: String,
    pub manifest: Manifest,
}

/// data → train → GA + RL → evaluate → report, each stage reading the
/// previous stage's files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let paths = ArtifactPaths::new(&cfg.output_dir);
    gen_data(cfg)?;
    let (_, train_losses) = train_original(cfg)?;
    let original_hash = file_sha256(&paths.checkpoint(ORIGINAL))?;
    let (_, ga_trace) = run_unlearning(cfg, Method::Ga)?;
    let (_, rl_trace) = run_unlearning(cfg, Method::Rl)?;
    if file_sha256(&paths.checkpoint(ORIGINAL))? != original_hash {
        return Err(HarnessError::OriginalModified);
    }
    evaluate(cfg)?;
    let (reports, verdicts) = report(cfg)?;
    let manifest = write_manifest(cfg)?;
    Ok(ExperimentResult {
        reports,
        verdicts,
        train_losses,
        ga_trace,
        rl_trace,
        checkpoints: [paths.checkpoint(ORIGINAL), paths.checkpoint("GA"), paths.checkpoint("RL")],
        original_hash,
        manifest,
    })
}
