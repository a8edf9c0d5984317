//! Epistemic graph construction.
//!
//! Context nodes are pulled from the query and stand for its fixed
//! constraints. Spark nodes are pulled from retrieved chunks: mechanisms,
//! properties and byproducts that may seed an unusual answer. Bridging calls
//! then label context–spark and spark–spark pairs with one of three
//! operators. Context–context edges are never allowed.

mod edges;
mod extract;
mod prompts;
mod topology;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exploration::SeedSet;
use crate::providers::ProviderError;

pub use edges::{candidate_pairs, generate_edges, BridgeOutcome, Pair, RejectedBridge};
pub use extract::{extract_context_nodes, extract_spark_nodes, sample_spark_nodes};
pub use prompts::Endpoint;
pub use topology::{assemble_graph, validate_topology, TopologyViolation};

pub const GRAPH_SCHEMA: &str = "prism-graph/1";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{stage} reply did not follow the line grammar: {detail}")]
    ExtractionParse { stage: &'static str, detail: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no admissible node pairs to bridge")]
    NoAdmissiblePairs,
    #[error("graph has {} topology violation(s): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    TopologyViolation(Vec<TopologyViolation>),
    #[error("graph has no context nodes")]
    EmptyContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextNode {
    pub node_id: String,
    pub label: String,
    pub description: String,
    /// Always the query the node was extracted from.
    pub origin: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparkKind {
    Mechanism,
    Property,
    Byproduct,
}

impl SparkKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mechanism" => Some(Self::Mechanism),
            "property" => Some(Self::Property),
            "byproduct" => Some(Self::Byproduct),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mechanism => "mechanism",
            Self::Property => "property",
            Self::Byproduct => "byproduct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparkNode {
    pub node_id: String,
    pub label: String,
    pub kind: SparkKind,
    /// First chunk the label was extracted from.
    pub source_chunk: String,
    /// Every chunk that produced this label, in chunk order.
    pub source_chunks: Vec<String>,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    Mapping,
    Blending,
    Inversion,
}

impl Operator {
    pub const ALL: [Operator; 3] = [Operator::Mapping, Operator::Blending, Operator::Inversion];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mapping" => Some(Self::Mapping),
            "blending" => Some(Self::Blending),
            "inversion" => Some(Self::Inversion),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mapping => "Mapping",
            Self::Blending => "Blending",
            Self::Inversion => "Inversion",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreativeEdge {
    pub src: String,
    pub dst: String,
    pub operator: Operator,
    pub bridge_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_set: Option<SeedSet>,
    pub chunk_ids: Vec<String>,
    pub rng_seed: u64,
    pub provider_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpistemicGraph {
    pub schema: String,
    pub query: String,
    pub context_nodes: Vec<ContextNode>,
    pub spark_nodes: Vec<SparkNode>,
    pub edges: Vec<CreativeEdge>,
    pub provenance: Provenance,
}

impl EpistemicGraph {
    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn is_context(&self, id: &str) -> bool {
        self.context_nodes.iter().any(|n| n.node_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphBuildConfig {
    pub spark_limit: usize,
    pub temp_context: f64,
    pub temp_spark: f64,
    pub temp_bridge: f64,
    /// Cap on bridged pairs; `None` bridges every admissible pair.
    pub edge_pair_budget: Option<usize>,
    pub max_in_flight: usize,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        Self {
            spark_limit: 7,
            temp_context: 0.0,
            temp_spark: 0.3,
            temp_bridge: 1.2,
            edge_pair_budget: None,
            max_in_flight: 8,
        }
    }
}

impl GraphBuildConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.spark_limit == 0 {
            return Err(GraphError::InvalidInput("spark_limit must be >= 1".into()));
        }
        for (name, t) in [
            ("temp_context", self.temp_context),
            ("temp_spark", self.temp_spark),
            ("temp_bridge", self.temp_bridge),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return Err(GraphError::InvalidInput(format!("{name} {t} outside [0, 2]")));
            }
        }
        Ok(())
    }
}

/// Order node ids as `c0 < c1 < … < c10 < s0 < …`.
pub fn cmp_node_ids(a: &str, b: &str) -> Ordering {
    fn key(id: &str) -> (&str, u64, &str) {
        let split = id.find(|c: char| c.is_ascii_digit()).unwrap_or(id.len());
        let (prefix, digits) = id.split_at(split);
        (prefix, digits.parse().unwrap_or(u64::MAX), digits)
    }
    key(a).cmp(&key(b))
}
