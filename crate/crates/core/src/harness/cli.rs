use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::{evaluate, gen_data, report, run_experiment, run_unlearning, train_original, write_manifest};
use super::{ExperimentConfig, HarnessError};
use crate::unlearn::Method;

#[derive(Debug, Parser)]
#[command(name = "unlearn-lab", version, about = "Machine-unlearning experiments on a synthetic text-to-token world")]
pub struct Cli {
    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the world, splits and reference pools.
    GenData,
    /// Train the Original model.
    Train {
        /// Training steps override.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Unlearn the forget set from the Original checkpoint.
    Unlearn {
        /// ga or rl
        #[arg(long)]
        method: String,
        /// Unlearning step budget override.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Score Original, GA and RL checkpoints.
    Evaluate,
    /// Render tables and trend verdicts from the metrics CSV.
    Report,
    /// Run every stage in order.
    RunAll {
        /// Training steps override.
        #[arg(long)]
        steps: Option<usize>,
    },
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    match &cli.command {
        Command::Train { steps: Some(s) } | Command::RunAll { steps: Some(s) } => cfg.train.steps = *s,
        Command::Unlearn { method, steps: Some(s) } => {
            let m: Method = method.parse()?;
            match m {
                Method::Ga => cfg.ga.max_steps = Some(*s),
                Method::Rl => cfg.rl.max_steps = Some(*s),
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::GenData => {
            let s = gen_data(&cfg)?;
            println!(
                "dataset: {} train, {} forget, {} remain",
                s.train.len(),
                s.forget_indices.len(),
                s.remain.len()
            );
        }
        Command::Train { .. } => {
            let (_, losses) = train_original(&cfg)?;
            println!("final training loss {:.4}", losses.last().copied().unwrap_or(f64::NAN));
        }
        Command::Unlearn { method, .. } => {
            let m: Method = method.parse()?;
            let (_, trace) = run_unlearning(&cfg, m)?;
            println!("{m}: {} steps, halt = {}", trace.steps(), trace.halt);
        }
        Command::Evaluate => {
            let reports = evaluate(&cfg)?;
            println!("{} reports written", reports.len());
        }
        Command::Report => {
            report(&cfg)?;
        }
        Command::RunAll { .. } => {
            let result = run_experiment(&cfg)?;
            let failed = result.verdicts.iter().filter(|v| v.gated && !v.agrees()).count();
            println!("{} gated verdicts disagree", failed);
        }
    }
    if !matches!(cli.command, Command::Report | Command::RunAll { .. }) {
        write_manifest(&cfg)?;
    }
    if matches!(cli.command, Command::Report | Command::RunAll { .. }) {
        let tables = std::fs::read_to_string(super::ArtifactPaths::new(&cfg.output_dir).tables())?;
        print!("{tables}");
    }
    Ok(())
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
