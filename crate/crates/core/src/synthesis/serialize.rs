use serde::{Deserialize, Serialize};

use crate::graph::EpistemicGraph;
use crate::text::sha256_hex;

pub const LAYOUT_VERSION: &str = "prism-serial/1";

/// The textual graph handed to the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedGraph {
    pub text: String,
    /// SHA-256 hex of the graph's canonical JSON.
    pub graph_hash: String,
    pub layout_version: String,
}

/// Keeps one value on one line and keeps the ` | ` separator unambiguous.
fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '|' => out.push_str("\\|"),
            c => out.push(c),
        }
    }
    out
}

/// Render the graph in a fixed layout: a header, then context nodes, spark
/// nodes and bridges, each in the order the graph stores them.
pub fn serialize_graph(graph: &EpistemicGraph) -> SerializedGraph {
    let mut lines = vec![
        format!("EPISTEMIC GRAPH ({LAYOUT_VERSION})"),
        format!("QUERY: {}", esc(&graph.query)),
        format!(
            "SIZE: {} context, {} spark, {} bridges",
            graph.context_nodes.len(),
            graph.spark_nodes.len(),
            graph.edges.len()
        ),
        "CONTEXT NODES:".to_owned(),
    ];
    for n in &graph.context_nodes {
        lines.push(format!(
            "{} | {} | {}",
            n.node_id,
            esc(&n.label),
            esc(&n.description)
        ));
    }
    lines.push("SPARK NODES:".to_owned());
    for n in &graph.spark_nodes {
        lines.push(format!(
            "{} | {} | {} | {}",
            n.node_id,
            esc(&n.label),
            n.kind.as_str(),
            esc(&n.rationale)
        ));
    }
    lines.push("BRIDGES:".to_owned());
    for e in &graph.edges {
        lines.push(format!(
            "{} -[{}]-> {} : {}",
            e.src,
            e.operator,
            e.dst,
            esc(&e.bridge_text)
        ));
    }
    let mut text = lines.join("\n");
    text.push('\n');
    SerializedGraph {
        text,
        graph_hash: sha256_hex(graph.to_json().as_bytes()),
        layout_version: LAYOUT_VERSION.to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ContextNode, CreativeEdge, Operator, Provenance, SparkKind, SparkNode, GRAPH_SCHEMA};

    fn tiny() -> EpistemicGraph {
        EpistemicGraph {
            schema: GRAPH_SCHEMA.into(),
            query: "q".into(),
            context_nodes: vec![ContextNode {
                node_id: "c0".into(),
                label: "roof".into(),
                description: "the roof".into(),
                origin: "q".into(),
            }],
            spark_nodes: vec![SparkNode {
                node_id: "s0".into(),
                label: "termite mound".into(),
                kind: SparkKind::Mechanism,
                source_chunk: "k".into(),
                source_chunks: vec!["k".into()],
                rationale: "passive cooling".into(),
            }],
            edges: vec![CreativeEdge {
                src: "c0".into(),
                dst: "s0".into(),
                operator: Operator::Blending,
                bridge_text: "vent the roof like a mound".into(),
            }],
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn one_blending_line() {
        let s = serialize_graph(&tiny());
        assert_eq!(s.text.matches("-[Blending]->").count(), 1);
        assert!(s
            .text
            .contains("c0 -[Blending]-> s0 : vent the roof like a mound\n"));
        assert_eq!(s, serialize_graph(&tiny()));
    }

    #[test]
    fn sections_in_order() {
        let t = serialize_graph(&tiny()).text;
        let c = t.find("CONTEXT NODES:").unwrap();
        let s = t.find("SPARK NODES:").unwrap();
        let b = t.find("BRIDGES:").unwrap();
        assert!(c < s && s < b);
    }

    #[test]
    fn distinct_edges_give_distinct_text() {
        let a = tiny();
        let mut b = tiny();
        b.edges[0].operator = Operator::Inversion;
        let mut c = tiny();
        c.edges[0].bridge_text = "vent the roof like a mound\nc0 -[Mapping]-> s0 : x".into();
        let texts = [a, b, c].map(|g| serialize_graph(&g).text);
        assert_ne!(texts[0], texts[1]);
        assert_ne!(texts[0], texts[2]);
        let bridges = texts[2].split("BRIDGES:\n").nth(1).unwrap();
        assert_eq!(bridges.lines().count(), 1);
    }

    #[test]
    fn label_separators_escaped() {
        let mut g = tiny();
        g.context_nodes[0].label = "a | b".into();
        let t = serialize_graph(&g).text;
        assert!(t.contains("c0 | a \\| b | the roof"));
    }
}
