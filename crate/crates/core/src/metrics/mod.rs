//! Evaluation maths: embedding similarity and PCA, distinct-k, the novelty
//! insight score with blind ranking, and ranked-diagnosis recall.

mod diagnosis;
mod distinct;
mod emit;
mod pca;
mod ranking;
mod similarity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{EmbeddingVector, ProviderError, ProviderHandle};

pub use diagnosis::{mean_rank, normalize_label, rank_of_truth, recall_at_k, DiagnosisResult, MeanRank};
pub use distinct::{distinct_k, embedding_equivalence, EmbeddingEquivalence};
pub use emit::{emit_projection, histogram_csv, parse_projection_csv, projection_csv, similarity_csv};
pub use pca::{pca_project, PcaProjection};
pub use ranking::{blind_rank, novelty_insight_score, parse_order, RankingOutcome};
pub use similarity::{
    cosine, cosine_similarity, inter_from_vectors, inter_similarity, intra_from_vectors, intra_similarity,
    Histogram, SimilarityMatrix, BIN_EDGES,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("zero-length vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample sets belong to different prompts: {expected} vs {got}")]
    PromptMismatch { expected: String, got: String },
    #[error("all vectors are identical")]
    DegenerateData,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no ranking outcomes")]
    NoOutcomes,
    #[error("outcomes mix dimensions {0} and {1}")]
    MixedDimensions(String, String),
    #[error("outcomes mix candidate counts {0} and {1}")]
    MixedN(usize, usize),
    #[error("judge reply could not be parsed: {0}")]
    JudgeParseError(String),
    #[error("judge order is not a total order of the candidates: {0}")]
    IncompleteRanking(String),
    #[error("no case has its truth among the candidates ({cases} cases)")]
    NoHits { cases: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Store(#[from] crate::persistence::StoreError),
}

/// How cross-model similarity is aggregated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterAggregation {
    /// Mean cosine over every cross pair.
    #[default]
    MeanOfPairs,
    /// Cosine between the two sets' mean vectors.
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub equivalence_threshold: f64,
    /// Recorded for protocol fidelity; no implemented metric reads it.
    pub patience: f64,
    pub pca_dims: usize,
    pub inter_aggregation: InterAggregation,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            equivalence_threshold: 0.80,
            patience: 0.8,
            pca_dims: 2,
            inter_aggregation: InterAggregation::MeanOfPairs,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(0.0..=1.0).contains(&self.equivalence_threshold) {
            return Err(MetricsError::InvalidArgument(format!(
                "equivalence_threshold {} outside [0, 1]",
                self.equivalence_threshold
            )));
        }
        if !(self.patience > 0.0 && self.patience <= 1.0) {
            return Err(MetricsError::InvalidArgument(format!(
                "patience {} outside (0, 1]",
                self.patience
            )));
        }
        if self.pca_dims == 0 {
            return Err(MetricsError::InvalidArgument("pca_dims must be >= 1".into()));
        }
        Ok(())
    }
}

/// Responses of one model to one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub model_id: String,
    pub prompt_id: String,
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<EmbeddingVector>>,
}

impl SampleSet {
    /// The set's vectors, embedding the texts when none are attached.
    pub fn vectors(&self, embed: &ProviderHandle) -> Result<Vec<Vec<f64>>, MetricsError> {
        if self.texts.is_empty() {
            return Err(MetricsError::TooFewSamples { needed: 1, got: 0 });
        }
        match &self.embeddings {
            Some(e) if e.len() != self.texts.len() => Err(MetricsError::InvalidArgument(format!(
                "{} embeddings for {} texts",
                e.len(),
                self.texts.len()
            ))),
            Some(e) => Ok(e.iter().map(|v| v.values.clone()).collect()),
            None => Ok(embed.embed(&self.texts)?.into_iter().map(|v| v.values).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config() {
        let c = MetricsConfig::default();
        assert_eq!((c.equivalence_threshold, c.patience, c.pca_dims), (0.80, 0.8, 2));
        c.validate().unwrap();
        assert!(MetricsConfig {
            patience: 0.0,
            ..c.clone()
        }
        .validate()
        .is_err());
    }
}
