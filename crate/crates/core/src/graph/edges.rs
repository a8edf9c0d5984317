use serde::{Deserialize, Serialize};

use super::prompts::{self, Endpoint};
use super::{cmp_node_ids, ContextNode, CreativeEdge, GraphBuildConfig, GraphError, Operator, SparkNode};
use crate::fanout::bounded_map;
use crate::grammar::parse_records;
use crate::protocol::{ask_parsed, AskError};
use crate::providers::ProviderHandle;

/// Node pair offered to the bridging call; `src` is the context member when
/// one is present.
#[derive(Debug, Clone)]
pub struct Pair<'a> {
    pub src: Endpoint<'a>,
    pub dst: Endpoint<'a>,
}

/// Every context–spark pair, then every spark–spark pair, truncated to the
/// budget.
pub fn candidate_pairs<'a>(
    context: &'a [ContextNode],
    sparks: &'a [SparkNode],
    budget: Option<usize>,
) -> Vec<Pair<'a>> {
    let ctx = |c: &'a ContextNode| Endpoint {
        id: &c.node_id,
        role: "context",
        label: &c.label,
        text: &c.description,
    };
    let spk = |s: &'a SparkNode| Endpoint {
        id: &s.node_id,
        role: "spark",
        label: &s.label,
        text: &s.rationale,
    };
    let mut pairs = Vec::new();
    for c in context {
        for s in sparks {
            pairs.push(Pair {
                src: ctx(c),
                dst: spk(s),
            });
        }
    }
    for (i, a) in sparks.iter().enumerate() {
        for b in &sparks[i + 1..] {
            pairs.push(Pair {
                src: spk(a),
                dst: spk(b),
            });
        }
    }
    if let Some(b) = budget {
        pairs.truncate(b);
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectedBridge {
    /// The reply named two context nodes as endpoints.
    ContextContext { src: String, dst: String },
    /// The reply named endpoints other than the pair it was asked about.
    WrongEndpoints {
        asked: (String, String),
        named: (String, String),
    },
    Unparseable {
        src: String,
        dst: String,
        detail: String,
    },
    Provider {
        src: String,
        dst: String,
        detail: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BridgeOutcome {
    pub edges: Vec<CreativeEdge>,
    pub rejected: Vec<RejectedBridge>,
}

struct Bridge {
    op: Operator,
    text: String,
    named: Option<(String, String)>,
}

fn parse_bridge(reply: &str) -> Result<Bridge, String> {
    let records = parse_records(reply).map_err(|e| e.to_string())?;
    let r = records.into_iter().find(|r| r.has("OP")).ok_or("no OP record")?;
    let op = Operator::parse(r.get("OP").unwrap_or(""))
        .ok_or_else(|| format!("unknown operator `{}`", r.get("OP").unwrap_or("")))?;
    let text = r.require("BRIDGE").ok_or("empty BRIDGE")?.to_owned();
    let named = match (r.get("SRC"), r.get("DST")) {
        (Some(s), Some(d)) => Some((s.to_owned(), d.to_owned())),
        (None, None) => None,
        _ => return Err("SRC and DST must appear together".into()),
    };
    Ok(Bridge { op, text, named })
}

/// Ask the bridging model to label each candidate pair with an operator.
/// Replies that cannot be parsed, or that try to connect two context nodes,
/// are dropped and reported in [`BridgeOutcome::rejected`].
pub fn generate_edges(
    query: &str,
    context: &[ContextNode],
    sparks: &[SparkNode],
    chat: &ProviderHandle,
    cfg: &GraphBuildConfig,
) -> Result<BridgeOutcome, GraphError> {
    if context.is_empty() {
        return Err(GraphError::InvalidInput("no context nodes".into()));
    }
    let pairs = candidate_pairs(context, sparks, cfg.edge_pair_budget);
    if pairs.is_empty() {
        if cfg.edge_pair_budget == Some(0) {
            return Ok(BridgeOutcome::default());
        }
        return Err(GraphError::NoAdmissiblePairs);
    }
    let is_context = |id: &str| context.iter().any(|c| c.node_id == id);
    let replies = bounded_map(&pairs, cfg.max_in_flight, |_, p| {
        ask_parsed(
            chat,
            prompts::SYSTEM,
            &prompts::bridge(query, &p.src, &p.dst),
            cfg.temp_bridge,
            parse_bridge,
        )
    });

    let mut out = BridgeOutcome::default();
    for (p, reply) in pairs.iter().zip(replies) {
        let (src, dst) = (p.src.id.to_owned(), p.dst.id.to_owned());
        let bridge = match reply {
            Ok(b) => b,
            Err(AskError::Parse(detail)) => {
                out.rejected
                    .push(RejectedBridge::Unparseable { src, dst, detail });
                continue;
            }
            Err(AskError::Provider(e)) => {
                out.rejected.push(RejectedBridge::Provider {
                    src,
                    dst,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        if let Some((a, b)) = &bridge.named {
            if is_context(a) && is_context(b) {
                log::warn!("bridge reply proposed context-context edge {a} <-> {b}; discarded");
                out.rejected.push(RejectedBridge::ContextContext {
                    src: a.clone(),
                    dst: b.clone(),
                });
                continue;
            }
            let same = (a == &src && b == &dst) || (a == &dst && b == &src);
            if !same {
                out.rejected.push(RejectedBridge::WrongEndpoints {
                    asked: (src, dst),
                    named: (a.clone(), b.clone()),
                });
                continue;
            }
        }
        out.edges.push(CreativeEdge {
            src,
            dst,
            operator: bridge.op,
            bridge_text: bridge.text,
        });
    }
    out.edges
        .sort_by(|a, b| cmp_node_ids(&a.src, &b.src).then(cmp_node_ids(&a.dst, &b.dst)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparkKind;
    use crate::providers::{make_mock_suite, ChatFixture, MockFixture};

    fn ctx(n: usize) -> Vec<ContextNode> {
        (0..n)
            .map(|i| ContextNode {
                node_id: format!("c{i}"),
                label: format!("ctx{i}"),
                description: "d".into(),
                origin: "q".into(),
            })
            .collect()
    }

    fn spk(n: usize) -> Vec<SparkNode> {
        (0..n)
            .map(|i| SparkNode {
                node_id: format!("s{i}"),
                label: format!("spark{i}"),
                kind: SparkKind::Mechanism,
                source_chunk: "k".into(),
                source_chunks: vec!["k".into()],
                rationale: "r".into(),
            })
            .collect()
    }

    #[test]
    fn candidate_census() {
        // 2 context x 3 sparks + C(3,2) spark pairs = 6 + 3
        let (c, s) = (ctx(2), spk(3));
        let pairs = candidate_pairs(&c, &s, None);
        assert_eq!(pairs.len(), 9);
        assert_eq!(pairs[0].src.id, "c0");
        assert_eq!(pairs[6].src.id, "s0");
        assert_eq!(candidate_pairs(&c, &s, Some(4)).len(), 4);
        for a in 1..5 {
            for b in 0..9 {
                let (c, s) = (ctx(a), spk(b));
                assert_eq!(
                    candidate_pairs(&c, &s, None).len(),
                    a * b + b * b.saturating_sub(1) / 2
                );
            }
        }
    }

    #[test]
    fn fixture_operator_on_every_pair() {
        let fx = MockFixture {
            chat: ChatFixture {
                bridge_operator: Some("Mapping".into()),
                ..Default::default()
            },
            ..Default::default()
        };
        let s = make_mock_suite(0, &fx);
        let out = generate_edges("q", &ctx(2), &spk(3), &s.chat, &GraphBuildConfig::default()).unwrap();
        assert_eq!(out.edges.len(), 9);
        assert!(out.edges.iter().all(|e| e.operator == Operator::Mapping));
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn bridge_calls_use_high_temperature() {
        let s = make_mock_suite(0, &MockFixture::default());
        let (chat, log) = s.chat.capturing();
        generate_edges("q", &ctx(1), &spk(1), &chat, &GraphBuildConfig::default()).unwrap();
        assert!(log.requests().iter().all(|r| r.temperature == 1.2));
    }

    #[test]
    fn context_context_reply_is_discarded() {
        let h = ProviderHandle::chat_fn("cc", |req| {
            if req.user_prompt.contains("DST_ID=s1") {
                Ok("OP=Blending | SRC=c0 | DST=c1 | BRIDGE=join the constraints".into())
            } else {
                Ok("OP=Inversion | BRIDGE=oppose".into())
            }
        });
        let out = generate_edges("q", &ctx(2), &spk(2), &h, &GraphBuildConfig::default()).unwrap();
        // c0-s1, c1-s1 and s0-s1 all name c0/c1.
        assert_eq!(out.edges.len(), 2);
        assert_eq!(
            out.rejected
                .iter()
                .filter(|r| matches!(r, RejectedBridge::ContextContext { .. }))
                .count(),
            3
        );
        assert!(out
            .edges
            .iter()
            .all(|e| !(e.src.starts_with('c') && e.dst.starts_with('c'))));
    }

    #[test]
    fn edges_sorted_by_ids() {
        let s = make_mock_suite(3, &MockFixture::default());
        let out = generate_edges("q", &ctx(2), &spk(11), &s.chat, &GraphBuildConfig::default()).unwrap();
        let keys: Vec<(String, String)> = out.edges.iter().map(|e| (e.src.clone(), e.dst.clone())).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| cmp_node_ids(&a.0, &b.0).then(cmp_node_ids(&a.1, &b.1)));
        assert_eq!(keys, sorted);
        assert_eq!(out.edges.len(), 2 * 11 + 55);
    }

    #[test]
    fn degenerate_inputs() {
        let s = make_mock_suite(0, &MockFixture::default());
        let cfg = GraphBuildConfig::default();
        assert!(matches!(
            generate_edges("q", &ctx(2), &[], &s.chat, &cfg),
            Err(GraphError::NoAdmissiblePairs)
        ));
        assert!(matches!(
            generate_edges("q", &[], &spk(2), &s.chat, &cfg),
            Err(GraphError::InvalidInput(_))
        ));
        let zero = GraphBuildConfig {
            edge_pair_budget: Some(0),
            ..Default::default()
        };
        assert!(generate_edges("q", &ctx(2), &[], &s.chat, &zero)
            .unwrap()
            .edges
            .is_empty());
    }

    #[test]
    fn malformed_bridges_are_rejected() {
        let h = ProviderHandle::chat_fn("bad", |_| Ok("OP=Teleport | BRIDGE=x".into()));
        let out = generate_edges("q", &ctx(1), &spk(1), &h, &GraphBuildConfig::default()).unwrap();
        assert!(out.edges.is_empty());
        assert!(matches!(out.rejected[0], RejectedBridge::Unparseable { .. }));
    }
}
