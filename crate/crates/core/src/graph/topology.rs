use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ContextNode, CreativeEdge, EpistemicGraph, GraphError, Provenance, SparkNode, GRAPH_SCHEMA};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TopologyViolation {
    DuplicateId { id: String },
    ContextContextEdge { src: String, dst: String },
    UnknownEndpoint { edge: usize, id: String },
    SelfLoop { id: String },
    EmptyLabel { id: String },
    EmptyBridgeText { edge: usize },
    ForeignOrigin { id: String },
    UnknownSourceChunk { id: String, chunk: String },
}

impl fmt::Display for TopologyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateId { id } => write!(f, "node id {id} is used more than once"),
            Self::ContextContextEdge { src, dst } => {
                write!(f, "edge {src} -> {dst} connects two context nodes")
            }
            Self::UnknownEndpoint { edge, id } => {
                write!(f, "edge #{edge} has unknown endpoint {id}")
            }
            Self::SelfLoop { id } => write!(f, "edge loops on {id}"),
            Self::EmptyLabel { id } => write!(f, "node {id} has an empty label"),
            Self::EmptyBridgeText { edge } => write!(f, "edge #{edge} has no bridge text"),
            Self::ForeignOrigin { id } => {
                write!(f, "context node {id} does not originate from the query")
            }
            Self::UnknownSourceChunk { id, chunk } => {
                write!(f, "spark {id} cites chunk {chunk} outside the sampled set")
            }
        }
    }
}

/// Every broken graph invariant; empty for a well-formed graph.
pub fn validate_topology(graph: &EpistemicGraph) -> Vec<TopologyViolation> {
    let mut out = Vec::new();
    let mut roles: HashMap<&str, bool> = HashMap::new();
    let ids = graph
        .context_nodes
        .iter()
        .map(|n| (n.node_id.as_str(), true, n.label.as_str()))
        .chain(
            graph
                .spark_nodes
                .iter()
                .map(|n| (n.node_id.as_str(), false, n.label.as_str())),
        );
    for (id, is_context, label) in ids {
        if roles.insert(id, is_context).is_some() {
            out.push(TopologyViolation::DuplicateId { id: id.to_owned() });
        }
        if label.trim().is_empty() {
            out.push(TopologyViolation::EmptyLabel { id: id.to_owned() });
        }
    }
    for n in &graph.context_nodes {
        if n.origin != graph.query {
            out.push(TopologyViolation::ForeignOrigin {
                id: n.node_id.clone(),
            });
        }
    }
    if !graph.provenance.chunk_ids.is_empty() {
        let known: HashSet<&str> = graph.provenance.chunk_ids.iter().map(String::as_str).collect();
        for s in &graph.spark_nodes {
            if !known.contains(s.source_chunk.as_str()) {
                out.push(TopologyViolation::UnknownSourceChunk {
                    id: s.node_id.clone(),
                    chunk: s.source_chunk.clone(),
                });
            }
        }
    }
    for (i, e) in graph.edges.iter().enumerate() {
        let src = roles.get(e.src.as_str());
        let dst = roles.get(e.dst.as_str());
        for (role, id) in [(src, &e.src), (dst, &e.dst)] {
            if role.is_none() {
                out.push(TopologyViolation::UnknownEndpoint {
                    edge: i,
                    id: id.clone(),
                });
            }
        }
        if e.src == e.dst {
            out.push(TopologyViolation::SelfLoop { id: e.src.clone() });
        } else if src == Some(&true) && dst == Some(&true) {
            out.push(TopologyViolation::ContextContextEdge {
                src: e.src.clone(),
                dst: e.dst.clone(),
            });
        }
        if e.bridge_text.trim().is_empty() {
            out.push(TopologyViolation::EmptyBridgeText { edge: i });
        }
    }
    out
}

/// Build the graph value, refusing anything [`validate_topology`] objects to.
pub fn assemble_graph(
    query: &str,
    context: Vec<ContextNode>,
    sparks: Vec<SparkNode>,
    edges: Vec<CreativeEdge>,
    provenance: Provenance,
) -> Result<EpistemicGraph, GraphError> {
    if context.is_empty() {
        return Err(GraphError::EmptyContext);
    }
    let graph = EpistemicGraph {
        schema: GRAPH_SCHEMA.to_owned(),
        query: query.to_owned(),
        context_nodes: context,
        spark_nodes: sparks,
        edges,
        provenance,
    };
    let violations = validate_topology(&graph);
    if !violations.is_empty() {
        return Err(GraphError::TopologyViolation(violations));
    }
    Ok(graph)
}
