//! End-to-end runs: configuration, synthetic fixtures, per-seed execution with
//! on-disk stage caching, sparsity sweeps, ablations and reports.

pub mod config;
pub mod report;
pub mod run;
pub mod synth;

use thiserror::Error;

use crate::augment::AugmentError;
use crate::embed::EmbedError;
use crate::gnn::GnnError;
use crate::graph::GraphError;
use crate::llm::GatewayError;
use crate::structure::StructureError;

pub use config::{Ablation, Classifier, PipelineConfig};
pub use report::{emit_report, mean_std, percent, ReportFormat, RunMeta, RunReport, SeedResult};
pub use run::{run_ablation, run_pipeline, run_sweep, load_graph};
pub use synth::{gen_synthetic, SynthError, SynthSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("text augmentation: {0}")]
    Augment(#[from] AugmentError),
    #[error("embedding: {0}")]
    Embed(#[from] EmbedError),
    #[error("structure augmentation: {0}")]
    Structure(#[from] StructureError),
    #[error("training: {0}")]
    Gnn(#[from] GnnError),
    #[error("LLM gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(String),
}

/// Coarse failure class, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Config,
    Provider,
    Numeric,
    Other,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Other => 1,
            FailureKind::Config => 2,
            FailureKind::Provider => 3,
            FailureKind::Numeric => 4,
        }
    }
}

fn gateway_kind(e: &GatewayError) -> FailureKind {
    match e {
        GatewayError::Provider { .. } => FailureKind::Provider,
        GatewayError::Config(_) | GatewayError::Arity { .. } => FailureKind::Config,
        GatewayError::Io(_) => FailureKind::Other,
    }
}

impl PipelineError {
    pub fn kind(&self) -> FailureKind {
        match self {
            PipelineError::Config(_) | PipelineError::Synth(_) => FailureKind::Config,
            PipelineError::Graph(GraphError::Io(_)) => FailureKind::Other,
            PipelineError::Graph(GraphError::Parse { .. } | GraphError::Invalid(_)) => FailureKind::Config,
            PipelineError::Graph(_) => FailureKind::Other,
            PipelineError::Augment(AugmentError::Node { source, .. }) => gateway_kind(source),
            PipelineError::Augment(AugmentError::UnknownMode(_)) => FailureKind::Config,
            PipelineError::Augment(_) => FailureKind::Other,
            PipelineError::Embed(EmbedError::Transport(_) | EmbedError::Response(_)) => FailureKind::Provider,
            PipelineError::Embed(EmbedError::Config(_)) => FailureKind::Config,
            PipelineError::Embed(_) => FailureKind::Other,
            PipelineError::Structure(StructureError::Gateway { source, .. }) => gateway_kind(source),
            PipelineError::Structure(StructureError::InvalidParameter(_)) => FailureKind::Config,
            PipelineError::Structure(_) => FailureKind::Other,
            PipelineError::Gnn(GnnError::Config(_)) => FailureKind::Config,
            PipelineError::Gnn(GnnError::EmptyTrain) => FailureKind::Config,
            PipelineError::Gnn(_) => FailureKind::Numeric,
            PipelineError::Gateway(e) => gateway_kind(e),
            PipelineError::Io(_) | PipelineError::Report(_) => FailureKind::Other,
        }
    }
}
