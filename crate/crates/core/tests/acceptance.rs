//! Acceptance suite: one PASS/FAIL line per criterion. Runs the full default
//! experiment for three master seeds plus a repeat of seed 0, so it takes
//! roughly as long as four experiments. A failed criterion is printed and
//! listed in the summary; set `ACCEPTANCE_STRICT=1` to also exit nonzero.

mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use unlearn_lab::dataset::{load_splits, DatasetSplits, Pool};
use unlearn_lab::harness::{file_sha256, ArtifactPaths, ExperimentConfig};
use unlearn_lab::metrics::{reports_from_csv, train_oracles, MetricReport, MIN_ALIGNMENT_MARGIN, MIN_CLASSIFIER_ACCURACY, MIN_RETRIEVAL};
use unlearn_lab::model::{load_checkpoint, mean_nll, ModelParams};

const SEEDS: [u64; 3] = [0, 1, 2];
const GRADIENT_BUDGET: Duration = Duration::from_secs(30);
const COMPETENCE_BUDGET: Duration = Duration::from_secs(600);
const EXPERIMENT_BUDGET: Duration = Duration::from_secs(900);
const NLL_FRACTION: f64 = 0.6;
const GA_TRIALS: u64 = 20;
const GA_TRIALS_REQUIRED: usize = 18;
const RELABEL_DRAWS: usize = 100_000;

struct Run {
    seed: u64,
    dir: PathBuf,
    total: Duration,
    train: Duration,
}

impl Run {
    fn paths(&self) -> ArtifactPaths {
        ArtifactPaths::new(&self.dir)
    }

    fn reports(&self) -> Vec<MetricReport> {
        reports_from_csv(&fs::read_to_string(self.paths().metrics()).unwrap()).unwrap()
    }

    fn report(&self, model: &str, split: Pool) -> MetricReport {
        self.reports().into_iter().find(|r| r.model == model && r.split == split).unwrap()
    }

    fn splits(&self) -> DatasetSplits {
        load_splits(&self.paths().splits()).unwrap()
    }

    fn checkpoint(&self, label: &str) -> ModelParams {
        load_checkpoint(&self.paths().checkpoint(label)).unwrap()
    }

    fn halt(&self, label: &str) -> String {
        let trace = fs::read_to_string(self.paths().trace(label)).unwrap();
        let footer = trace.lines().last().unwrap();
        footer.split_whitespace().find_map(|w| w.strip_prefix("halt=")).unwrap().to_string()
    }
}

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unlearn-lab"))
}

/// `run-all` through the binary, timing the train stage from its log lines.
fn run_all(seed: u64, dir: &Path) -> Run {
    let start = Instant::now();
    let mut child = lab()
        .args(["--seed", &seed.to_string(), "--output-dir"])
        .arg(dir)
        .arg("run-all")
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let (mut train_start, mut train) = (None, Duration::ZERO);
    for line in BufReader::new(child.stderr.take().unwrap()).lines() {
        let line = line.unwrap();
        match line.as_str() {
            "[train] start" => train_start = Some(Instant::now()),
            "[train] done" => train = train_start.map_or(Duration::ZERO, |t| t.elapsed()),
            _ => {}
        }
        if line.starts_with("error") || line.starts_with("[train] step") || line.contains("halt") {
            eprintln!("  seed {seed}: {line}");
        }
    }
    let status = child.wait().unwrap();
    assert!(status.success(), "run-all seed {seed} failed: {status}");
    Run {
        seed,
        dir: dir.to_path_buf(),
        total: start.elapsed(),
        train,
    }
}

struct Ledger {
    failed: Vec<usize>,
}

impl Ledger {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

fn majority(flags: &[bool]) -> bool {
    2 * flags.iter().filter(|&&f| f).count() > flags.len()
}

fn fmt_flags(flags: &[bool]) -> String {
    flags.iter().map(|&f| if f { "+" } else { "-" }).collect()
}

fn main() {
    let mut ledger = Ledger { failed: Vec::new() };

    let t = Instant::now();
    let prims = common::primitive_gradient_errors();
    let net = common::network_gradient_error();
    let elapsed = t.elapsed();
    let (worst_name, worst) = prims.iter().copied().fold(("network", net), |a, b| if b.1 > a.1 { b } else { a });
    ledger.record(
        1,
        "gradient correctness",
        worst < common::FD_TOLERANCE && elapsed < GRADIENT_BUDGET,
        format!(
            "{} primitives + 2-layer network, max rel err {worst:.2e} ({worst_name}) < {:.0e}, {:.1}s < {}s",
            prims.len(),
            common::FD_TOLERANCE,
            elapsed.as_secs_f64(),
            GRADIENT_BUDGET.as_secs()
        ),
    );

    let e = common::metric_oracle_errors();
    ledger.record(
        2,
        "metric oracles",
        e.frechet_1d < 1e-9 && e.frechet_diagonal < 1e-8 && e.kl_vs_sum < 1e-12 && e.kl_min >= 0.0 && e.psd_sqrt < 1e-8,
        format!(
            "FD 1-D {:.1e} < 1e-9, FD diag {:.1e} < 1e-8, KL {:.1e} < 1e-12 (min {:.2e} ≥ 0), psd_sqrt {:.1e} < 1e-8",
            e.frechet_1d, e.frechet_diagonal, e.kl_vs_sum, e.kl_min, e.psd_sqrt
        ),
    );

    let work = tempfile::tempdir().unwrap();
    let runs: Vec<Run> = SEEDS.iter().map(|&s| run_all(s, &work.path().join(format!("seed{s}")))).collect();
    let repeat = run_all(0, &work.path().join("seed0-repeat"));
    let main = &runs[0];
    let splits = main.splits();
    let forget = splits.forget_set();
    let vocab = splits.world.vocab();
    let original = main.checkpoint("Original");

    let train_nll = mean_nll(&original, &splits.train).unwrap();
    let nll_bound = NLL_FRACTION * (vocab as f64).ln();
    let cfg = ExperimentConfig::default();
    let t = Instant::now();
    let oracles = train_oracles(&splits.world, &cfg.oracles, cfg.sub_seed("oracles")).unwrap();
    let oracle_time = t.elapsed();
    let q = oracles.quality;
    let recorded = fs::read_to_string(main.paths().oracles()).unwrap();
    let competence_time = main.train + oracle_time;
    ledger.record(
        3,
        "base-model competence gates",
        train_nll < nll_bound
            && q.classifier_accuracy > MIN_CLASSIFIER_ACCURACY
            && q.alignment.margin() >= MIN_ALIGNMENT_MARGIN
            && q.alignment.retrieval >= MIN_RETRIEVAL
            && recorded.contains(&oracles.hashes.encoder)
            && competence_time < COMPETENCE_BUDGET,
        format!(
            "train nll {train_nll:.3} < {nll_bound:.3}, classifier acc {:.3} > {MIN_CLASSIFIER_ACCURACY}, margin {:.3} ≥ {MIN_ALIGNMENT_MARGIN}, retrieval {:.3} ≥ {MIN_RETRIEVAL}, train+oracles {:.0}s < {}s",
            q.classifier_accuracy,
            q.alignment.margin(),
            q.alignment.retrieval,
            competence_time.as_secs_f64(),
            COMPETENCE_BUDGET.as_secs()
        ),
    );

    let before = mean_nll(&original, &forget).unwrap();
    let after = mean_nll(&main.checkpoint("GA"), &forget).unwrap();
    let halt = main.halt("GA");
    let ga_ok = halt == "explosion" || after >= 2.0 * before;
    let trials = common::ga_single_step_trials(&original, &forget, cfg.unlearn_config(unlearn_lab::unlearn::Method::Ga).lr, GA_TRIALS);
    ledger.record(
        4,
        "GA forgetting",
        ga_ok && trials >= GA_TRIALS_REQUIRED,
        format!(
            "forget nll {before:.3} → {after:.3} (ratio {:.2}), halt={halt}; single-step trials {trials}/{GA_TRIALS} ≥ {GA_TRIALS_REQUIRED}",
            after / before
        ),
    );

    let rl_after = mean_nll(&main.checkpoint("RL"), &forget).unwrap();
    let clap_down: Vec<bool> = runs
        .iter()
        .map(|r| r.report("RL", Pool::Forget).clap < r.report("Original", Pool::Forget).clap)
        .collect();
    let c0 = (main.report("Original", Pool::Forget).clap, main.report("RL", Pool::Forget).clap);
    ledger.record(
        5,
        "RL forgetting",
        rl_after > before && majority(&clap_down),
        format!(
            "forget nll {before:.3} → {rl_after:.3}; forget CLAP decreases in seeds [{}] (seed 0: {:.4} → {:.4})",
            fmt_flags(&clap_down),
            c0.0,
            c0.1
        ),
    );

    let fad_up = |label: &str| -> Vec<bool> {
        runs.iter()
            .map(|r| r.report(label, Pool::Remain).fad > r.report("Original", Pool::Remain).fad)
            .collect()
    };
    let (ga_up, rl_up) = (fad_up("GA"), fad_up("RL"));
    let cells: Vec<usize> = runs
        .iter()
        .map(|r| fs::read_to_string(r.paths().verdicts()).unwrap().lines().skip(1).filter(|l| !l.is_empty()).count())
        .collect();
    let fads = |r: &Run| {
        ["Original", "GA", "RL"].map(|m| format!("{:.3}", r.report(m, Pool::Remain).fad)).join("/")
    };
    // remain likelihood is reported alongside FAD as a second view of degradation
    let remain_nll = ["Original", "GA", "RL"].map(|m| format!("{:.3}", mean_nll(&main.checkpoint(m), &splits.remain).unwrap())).join("/");
    ledger.record(
        6,
        "remain-set degradation",
        majority(&ga_up) && majority(&rl_up) && cells.iter().all(|&c| c == 12),
        format!(
            "remain FAD up GA [{}] RL [{}] (seed 0 Original/GA/RL FAD {}, remain nll {remain_nll}); verdict cells {cells:?}",
            fmt_flags(&ga_up),
            fmt_flags(&rl_up),
            fads(main)
        ),
    );

    let stats = common::relabel_statistics(&forget, vocab, RELABEL_DRAWS, 7);
    let (lo, hi) = stats.collision_bounds;
    ledger.record(
        7,
        "relabeling statistics",
        stats.chi_square < stats.critical && (lo..=hi).contains(&stats.collision_rate),
        format!(
            "{} draws, chi-square {:.1} < {:.1} (df {}, p=0.001), collision rate {:.5} in [{lo:.5}, {hi:.5}]",
            stats.draws,
            stats.chi_square,
            stats.critical,
            vocab - 1,
            stats.collision_rate
        ),
    );

    let report_files = |r: &Run| {
        let p = r.paths();
        [p.oracles(), p.metrics(), p.tables(), p.latex(), p.verdicts()].map(|f| fs::read(f).unwrap())
    };
    let identical = report_files(main) == report_files(&repeat)
        && file_sha256(&main.paths().checkpoint("Original")).unwrap() == file_sha256(&repeat.paths().checkpoint("Original")).unwrap();
    // rerun both unlearning stages on the repeat directory and watch the Original bytes
    let ckpt = repeat.paths().checkpoint("Original");
    let hash_before = file_sha256(&ckpt).unwrap();
    let unchanged = ["ga", "rl"].iter().all(|m| {
        let ok = lab()
            .args(["--seed", "0", "--output-dir"])
            .arg(&repeat.dir)
            .args(["unlearn", "--method", m])
            .stderr(Stdio::null())
            .stdout(Stdio::null())
            .status()
            .unwrap()
            .success();
        ok && file_sha256(&ckpt).unwrap() == hash_before
    });
    ledger.record(
        8,
        "determinism and immutability",
        identical && unchanged,
        format!(
            "seed 0 twice: reports byte-identical = {identical}; Original {} unchanged by GA and RL = {unchanged}",
            &hash_before[..16]
        ),
    );

    let slowest = runs.iter().chain([&repeat]).map(|r| r.total).max().unwrap();
    ledger.record(
        9,
        "full default experiment runtime",
        slowest < EXPERIMENT_BUDGET,
        format!(
            "run-all wall times {} s, max {:.0}s < {}s",
            runs.iter()
                .chain([&repeat])
                .map(|r| format!("seed{}={:.0}", r.seed, r.total.as_secs_f64()))
                .collect::<Vec<_>>()
                .join(" "),
            slowest.as_secs_f64(),
            EXPERIMENT_BUDGET.as_secs()
        ),
    );

    if ledger.failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: failed criteria {:?}", ledger.failed);
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
