//! Batch experiments: many samples per prompt across generation modes,
//! persisted cell by cell, and a report computed from what was persisted.
//!
//! An experiment directory looks like
//!
//! ```text
//! <out>/manifest.json
//! <out>/records.jsonl      one line per completed cell
//! <out>/embeddings.jsonl   one vector per completed cell
//! <out>/rankings.jsonl     only when a judge and human baselines exist
//! <out>/runs/<run_id>/     the per-run artifacts
//! ```

mod report;
mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expert::{default_personas, ExpertPersona};
use crate::json::to_canonical_string;
use crate::metrics::{MetricsConfig, MetricsError, RankingOutcome};
use crate::persistence::StoreError;
use crate::synthesis::{GenerationRecord, Mode, PipelineConfig};
use crate::text::sha256_hex;

pub use report::{
    build_report, write_report, CellCounts, IntraSummary, ModeReport, ProjectionSummary, PromptReport, Report,
};
pub use run::{cell_seed, run_experiment, ExperimentProviders, RunOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub(crate) fn read_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Generation modes an experiment can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    Vanilla,
    FlatRag,
    Prism,
    /// PRISM seeded by an expert panel's queries instead of random nouns.
    PrismExpert,
}

impl ExperimentMode {
    pub const ALL: [ExperimentMode; 4] = [
        ExperimentMode::Vanilla,
        ExperimentMode::FlatRag,
        ExperimentMode::Prism,
        ExperimentMode::PrismExpert,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentMode::Vanilla => "vanilla",
            ExperimentMode::FlatRag => "flat_rag",
            ExperimentMode::Prism => "prism",
            ExperimentMode::PrismExpert => "prism_expert",
        }
    }

    pub fn pipeline_mode(self) -> Mode {
        match self {
            ExperimentMode::Vanilla => Mode::Vanilla,
            ExperimentMode::FlatRag => Mode::FlatRag,
            ExperimentMode::Prism | ExperimentMode::PrismExpert => Mode::Prism,
        }
    }

    fn ordinal(self) -> u64 {
        Self::ALL.iter().position(|m| *m == self).expect("listed") as u64
    }
}

impl std::fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum PromptInput {
    Text(String),
    Full {
        #[serde(default)]
        id: String,
        text: String,
        #[serde(default)]
        human: Option<String>,
    },
}

/// One experiment prompt. In a spec file it may be a bare string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "PromptInput")]
pub struct PromptSpec {
    /// Filled with `p1`, `p2`, ... when left empty.
    pub id: String,
    pub text: String,
    /// Human-written baseline answer for blind ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<String>,
}

impl From<PromptInput> for PromptSpec {
    fn from(p: PromptInput) -> Self {
        match p {
            PromptInput::Text(text) => Self {
                id: String::new(),
                text,
                human: None,
            },
            PromptInput::Full { id, text, human } => Self { id, text, human },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertSettings {
    pub personas: Vec<ExpertPersona>,
    pub temperature: f64,
    /// Seed queries kept from the panel.
    pub per_prompt_limit: usize,
    pub max_in_flight: usize,
}

impl Default for ExpertSettings {
    fn default() -> Self {
        Self {
            personas: default_personas(),
            temperature: 0.7,
            per_prompt_limit: 5,
            max_in_flight: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeSpec {
    pub dimension: String,
}

/// Which providers the CLI should build. Real endpoints and credentials
/// come from the environment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSpec {
    pub mock: bool,
    /// Mock fixture directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
}

/// Values to sweep; each produces its own experiment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweep {
    pub exploration_k: Vec<usize>,
}

fn one() -> usize {
    1
}

fn four() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub prompts: Vec<PromptSpec>,
    pub modes: Vec<ExperimentMode>,
    #[serde(default = "one")]
    pub samples_per_prompt: usize,
    #[serde(default)]
    pub rng_seed: u64,
    /// Its `mode` and `rng_seed` are overridden per cell.
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub expert: ExpertSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeSpec>,
    #[serde(default = "four")]
    pub max_workers: usize,
    /// Noun list for wild seeds; the bundled list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub providers: ProviderSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

impl ExperimentSpec {
    pub fn new(
        name: impl Into<String>,
        prompts: Vec<String>,
        modes: Vec<ExperimentMode>,
        samples: usize,
    ) -> Self {
        let mut spec = Self {
            name: name.into(),
            prompts: prompts.into_iter().map(|t| PromptInput::Text(t).into()).collect(),
            modes,
            samples_per_prompt: samples,
            rng_seed: 0,
            pipeline: PipelineConfig::default(),
            metrics: MetricsConfig::default(),
            expert: ExpertSettings::default(),
            judge: None,
            max_workers: 4,
            lexicon: None,
            providers: ProviderSpec::default(),
            sweep: None,
        };
        spec.assign_prompt_ids();
        spec
    }

    /// Parse and validate; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let mut spec: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
        spec.assign_prompt_ids();
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        resolve(&mut spec.lexicon);
        resolve(&mut spec.providers.fixture);
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&read_text(path)?, base)
    }

    fn assign_prompt_ids(&mut self) {
        for (i, p) in self.prompts.iter_mut().enumerate() {
            if p.id.trim().is_empty() {
                p.id = format!("p{}", i + 1);
            }
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if self.name.trim().is_empty() {
            return bad("name is empty".into());
        }
        if self.prompts.is_empty() {
            return bad("no prompts".into());
        }
        if self.modes.is_empty() {
            return bad("no modes".into());
        }
        if self.samples_per_prompt == 0 {
            return bad("samples_per_prompt must be >= 1".into());
        }
        let mut ids = std::collections::HashSet::new();
        for p in &self.prompts {
            if p.text.trim().is_empty() {
                return bad(format!("prompt {} is empty", p.id));
            }
            if !ids.insert(p.id.as_str()) {
                return bad(format!("duplicate prompt id {}", p.id));
            }
        }
        let mut modes = self.modes.clone();
        modes.sort();
        modes.dedup();
        if modes.len() != self.modes.len() {
            return bad("modes repeat".into());
        }
        if self.modes.contains(&ExperimentMode::PrismExpert) && self.expert.personas.is_empty() {
            return bad("prism_expert needs at least one persona".into());
        }
        if let Some(s) = &self.sweep {
            if s.exploration_k.contains(&0) {
                return bad("sweep values of k must be >= 1".into());
            }
        }
        self.pipeline
            .exploration
            .validate()
            .map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
        self.pipeline
            .graph
            .validate()
            .map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
        self.metrics.validate()?;
        Ok(())
    }

    /// One spec per sweep value, or just this one.
    pub fn expand_sweep(&self) -> Vec<ExperimentSpec> {
        let Some(sweep) = self.sweep.as_ref().filter(|s| !s.exploration_k.is_empty()) else {
            return vec![self.clone()];
        };
        sweep
            .exploration_k
            .iter()
            .map(|&k| {
                let mut s = self.clone();
                s.sweep = None;
                s.name = format!("{}-k{k}", self.name);
                s.pipeline.exploration.k = k;
                s
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON of the spec.
    pub fn digest(&self) -> String {
        sha256_hex(to_canonical_string(self).as_bytes())
    }
}

/// Outcome of one (prompt, mode, sample) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub prompt_id: String,
    pub mode: ExperimentMode,
    pub sample_index: usize,
    pub rng_seed: u64,
    pub run_id: Option<String>,
    pub error: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CellStatus {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub prompt_id: String,
    pub mode: ExperimentMode,
    pub sample_index: usize,
    pub rng_seed: u64,
    pub record: GenerationRecord,
}

/// One line of `embeddings.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub prompt_id: String,
    pub mode: ExperimentMode,
    pub sample_index: usize,
    pub run_id: String,
    pub model_id: String,
    pub values: Vec<f64>,
}

/// One line of `rankings.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub prompt_id: String,
    pub mode: ExperimentMode,
    pub outcome: RankingOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub name: String,
    pub configs_digest: String,
    pub spec: ExperimentSpec,
    pub provider_ids: BTreeMap<String, String>,
    pub run_ids: Vec<String>,
    pub cells: Vec<CellStatus>,
    /// Artifact name to path relative to the manifest's directory.
    pub artifacts: BTreeMap<String, String>,
    /// Embedding and ranking steps that failed.
    #[serde(default)]
    pub failures: Vec<String>,
    pub started_at: u64,
    pub finished_at: u64,
    /// Every cell, embedding and ranking succeeded.
    pub complete: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        serde_json::from_str(&read_text(path)?).map_err(|e| HarnessError::Parse {
            path: path.to_owned(),
            detail: e.to_string(),
        })
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &CellStatus> {
        self.cells.iter().filter(|c| !c.ok())
    }
}
