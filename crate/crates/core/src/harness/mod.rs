//! Config-driven experiment pipeline and its command-line front end.

mod cli;
mod config;
mod experiment;
mod table;

use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::unlearn::UnlearnError;

pub use cli::{run_cli, Cli, Command};
pub use config::{ArchConfig, ExperimentConfig, TrainSection, UnlearnSection};
pub use experiment::{
    evaluate, file_sha256, gen_data, report, run_experiment, run_unlearning, train_original, write_manifest, ArtifactPaths,
    ExperimentResult, Manifest, ManifestEntry, OracleRecord,
};
pub use table::{
    expectation, method_label, render_latex_rows, render_report, render_table, trend_verdicts, verdicts_to_csv, Metric, Sign,
    Verdict, MODEL_LABELS, ORIGINAL, VERDICT_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing input artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("missing report row {0}")]
    MissingReport(String),
    #[error("oracle quality gate failed: {}", .0.join("; "))]
    QualityGate(Vec<String>),
    #[error("the Original checkpoint changed during unlearning")]
    OriginalModified,
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Unlearn(#[from] UnlearnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ HarnessError::Stage { .. } => e,
            e => HarnessError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// 1 for bad input (config, arguments, missing files), 2 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::InvalidArgument(_)
            | HarnessError::MissingArtifact(_)
            | HarnessError::Unlearn(UnlearnError::UnknownMethod(_)) => 1,
            HarnessError::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
