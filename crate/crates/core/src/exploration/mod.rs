//! Seeding, wild retrieval and corpus hygiene.
//!
//! A run starts by drawing `k` nouns from a lexicon. Each noun becomes a
//! search query; the union of what comes back is deduplicated, filtered for
//! navigational and low-entropy pages, cut into overlapping token windows,
//! and finally subsampled into the chunk set that feeds spark extraction.

mod chunking;
mod hygiene;
mod retrieval;
mod seeds;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunking::{chunk_docs, chunk_spans, sample_chunks};
pub use hygiene::{canonicalize_url, dedup, filter_content, link_marker_density, FilterConfig};
pub use retrieval::retrieve_all;
pub use seeds::{build_queries, sample_seeds, Lexicon, QueryMode, SeedSet};

#[derive(Debug, Error)]
pub enum ExplorationError {
    #[error("lexicon has {available} nouns, cannot draw {k}")]
    LexiconTooSmall { k: usize, available: usize },
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no queries to issue")]
    NoQueries,
    #[error("all {} search queries failed; first error: {}", .failures.len(), .failures.first().map(String::as_str).unwrap_or(""))]
    AllQueriesFailed { failures: Vec<String> },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub url: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    /// SHA-256 hex of the normalized body.
    pub content_hash: String,
    /// The query that fetched this document.
    pub seed_origin: String,
}

impl RetrievedDoc {
    pub fn new(url: impl Into<String>, body: impl Into<String>, seed_origin: impl Into<String>) -> Self {
        let body = body.into();
        Self {
            url: url.into(),
            title: String::new(),
            content_hash: crate::text::content_hash(&body),
            body,
            seed_origin: seed_origin.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_url: String,
    pub doc_hash: String,
    pub start_token: usize,
    pub token_len: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    /// Seeds drawn per run.
    pub k: usize,
    /// Chunk window, in tokens.
    pub window: usize,
    pub overlap: usize,
    pub chunk_sample_n: usize,
    pub per_seed_result_limit: usize,
    pub query_mode: QueryMode,
    /// Concurrent search calls.
    pub max_in_flight: usize,
    pub filter: FilterConfig,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            k: 3,
            window: 400,
            overlap: 80,
            chunk_sample_n: 8,
            per_seed_result_limit: 10,
            query_mode: QueryMode::Syntactic,
            max_in_flight: 8,
            filter: FilterConfig::default(),
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<(), ExplorationError> {
        if self.k == 0 {
            return Err(ExplorationError::InvalidConfig("k must be >= 1".into()));
        }
        if self.overlap >= self.window {
            return Err(ExplorationError::InvalidConfig(format!(
                "overlap {} must be below window {}",
                self.overlap, self.window
            )));
        }
        if self.chunk_sample_n == 0 {
            return Err(ExplorationError::InvalidConfig(
                "chunk_sample_n must be >= 1".into(),
            ));
        }
        if self.per_seed_result_limit == 0 {
            return Err(ExplorationError::InvalidConfig(
                "per_seed_result_limit must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_configuration() {
        let c = ExplorationConfig::default();
        assert_eq!((c.k, c.window, c.overlap, c.chunk_sample_n), (3, 400, 80, 8));
        assert_eq!(c.per_seed_result_limit, 10);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let c = ExplorationConfig {
            overlap: 400,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExplorationConfig {
            k: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
