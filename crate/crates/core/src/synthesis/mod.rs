//! Graph serialization and graph-conditioned generation, plus the
//! end-to-end pipeline that strings every stage together.

mod generate;
mod pipeline;
mod serialize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::ProviderError;

pub use generate::{build_prompt, generate, GenerationInput, GenerationRecord};
pub use pipeline::{
    build_graph, derive_run_id, run_pipeline, GraphRun, PipelineConfig, PipelineError, Providers, RunOutput,
    RunSink, SeedSource, StageError,
};
pub use serialize::{serialize_graph, SerializedGraph, LAYOUT_VERSION};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("mode {mode}: {detail}")]
    ModeArgumentMismatch { mode: Mode, detail: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{provider} returned an empty answer")]
    EmptyOutput { provider: String },
}

/// What the generator is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The query alone.
    Vanilla,
    /// The query plus the raw sampled chunks.
    FlatRag,
    /// The query plus the serialized graph.
    Prism,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::FlatRag => "flat_rag",
            Mode::Prism => "prism",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vanilla" => Some(Mode::Vanilla),
            "flat_rag" => Some(Mode::FlatRag),
            "prism" => Some(Mode::Prism),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the retrieved material sits relative to the query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    AfterQuery,
    BeforeQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub temperature: f64,
    pub placement: Placement,
    pub max_tokens: u32,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            placement: Placement::AfterQuery,
            max_tokens: 1024,
        }
    }
}

impl SynthesisConfig {
    /// Settings for similarity-convergence experiments.
    pub fn hivemind() -> Self {
        Self {
            temperature: 0.7,
            ..Self::default()
        }
    }
}
