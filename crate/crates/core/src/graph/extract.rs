use std::collections::HashMap;

use super::{prompts, ContextNode, GraphBuildConfig, GraphError, SparkKind, SparkNode};
use crate::exploration::Chunk;
use crate::fanout::bounded_map;
use crate::grammar::parse_records;
use crate::protocol::{ask_parsed, AskError};
use crate::providers::ProviderHandle;
use crate::rng::sample_indices;
use crate::text::fold_label;

fn parse_context(text: &str) -> Result<Vec<(String, String)>, String> {
    let records = parse_records(text).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for r in records {
        let label = r
            .require("LABEL")
            .ok_or_else(|| format!("line {}: record without LABEL", r.line))?;
        out.push((label.to_owned(), r.get("DESC").unwrap_or("").to_owned()));
    }
    if out.is_empty() {
        return Err("no LABEL records".into());
    }
    Ok(out)
}

/// Context nodes for `query`, ids `c0..` in sorted-label order.
pub fn extract_context_nodes(
    query: &str,
    chat: &ProviderHandle,
    cfg: &GraphBuildConfig,
) -> Result<Vec<ContextNode>, GraphError> {
    if query.trim().is_empty() {
        return Err(GraphError::InvalidInput("query is empty".into()));
    }
    let parsed = ask_parsed(
        chat,
        prompts::SYSTEM,
        &prompts::context(query),
        cfg.temp_context,
        parse_context,
    )
    .map_err(|e| match e {
        AskError::Provider(p) => GraphError::Provider(p),
        AskError::Parse(detail) => GraphError::ExtractionParse {
            stage: "context extraction",
            detail,
        },
    })?;
    let mut seen = std::collections::HashSet::new();
    let mut nodes: Vec<(String, String)> = parsed
        .into_iter()
        .filter(|(label, _)| seen.insert(fold_label(label)))
        .collect();
    nodes.sort_by(|a, b| fold_label(&a.0).cmp(&fold_label(&b.0)).then(a.0.cmp(&b.0)));
    Ok(nodes
        .into_iter()
        .enumerate()
        .map(|(i, (label, description))| ContextNode {
            node_id: format!("c{i}"),
            label,
            description,
            origin: query.to_owned(),
        })
        .collect())
}

fn parse_sparks(text: &str) -> Result<Vec<(String, SparkKind, String)>, String> {
    let records = parse_records(text).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for r in records {
        let label = r
            .require("LABEL")
            .ok_or_else(|| format!("line {}: record without LABEL", r.line))?;
        let kind = r
            .get("KIND")
            .and_then(SparkKind::parse)
            .ok_or_else(|| format!("line {}: KIND must be mechanism, property or byproduct", r.line))?;
        out.push((
            label.to_owned(),
            kind,
            r.get("RATIONALE").unwrap_or("").to_owned(),
        ));
    }
    Ok(out)
}

/// Union of per-chunk spark extraction. Labels that repeat across chunks are
/// merged into the first occurrence. A chunk whose reply cannot be parsed or
/// whose call fails is skipped; the batch fails only if every chunk did.
pub fn extract_spark_nodes(
    chunks: &[Chunk],
    query: &str,
    chat: &ProviderHandle,
    cfg: &GraphBuildConfig,
) -> Result<Vec<SparkNode>, GraphError> {
    if chunks.is_empty() {
        return Err(GraphError::InvalidInput("no chunks".into()));
    }
    let replies = bounded_map(chunks, cfg.max_in_flight, |_, chunk| {
        ask_parsed(
            chat,
            prompts::SYSTEM,
            &prompts::spark(query, chunk),
            cfg.temp_spark,
            parse_sparks,
        )
    });

    let mut merged: Vec<SparkNode> = Vec::new();
    let mut by_label: HashMap<String, usize> = HashMap::new();
    let mut last_err = None;
    let mut failed = 0;
    for (chunk, reply) in chunks.iter().zip(replies) {
        let found = match reply {
            Ok(v) => v,
            Err(e) => {
                log::warn!("spark extraction skipped chunk {}: {e:?}", chunk.chunk_id);
                failed += 1;
                last_err = Some(e);
                continue;
            }
        };
        for (label, kind, rationale) in found {
            let key = fold_label(&label);
            match by_label.get(&key) {
                Some(&i) => {
                    let node = &mut merged[i];
                    if !node.source_chunks.contains(&chunk.chunk_id) {
                        node.source_chunks.push(chunk.chunk_id.clone());
                    }
                }
                None => {
                    by_label.insert(key, merged.len());
                    merged.push(SparkNode {
                        node_id: String::new(),
                        label,
                        kind,
                        source_chunk: chunk.chunk_id.clone(),
                        source_chunks: vec![chunk.chunk_id.clone()],
                        rationale,
                    });
                }
            }
        }
    }
    if failed == chunks.len() {
        return Err(match last_err.expect("at least one failure") {
            AskError::Provider(p) => GraphError::Provider(p),
            AskError::Parse(detail) => GraphError::ExtractionParse {
                stage: "spark extraction",
                detail,
            },
        });
    }
    merged.sort_by(|a, b| {
        fold_label(&a.label)
            .cmp(&fold_label(&b.label))
            .then(a.label.cmp(&b.label))
    });
    for (i, n) in merged.iter_mut().enumerate() {
        n.node_id = format!("s{i}");
    }
    Ok(merged)
}

/// `min(limit, len)` sparks drawn uniformly without replacement, returned in
/// their original order.
pub fn sample_spark_nodes(sparks: &[SparkNode], limit: usize, rng_seed: u64) -> Vec<SparkNode> {
    let mut picks = sample_indices(sparks.len(), limit, rng_seed);
    picks.sort_unstable();
    picks.into_iter().map(|i| sparks[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{ContextRule, NodeSpec, SparkRule, SparkSpec};
    use crate::providers::{make_mock_suite, ChatFixture, MockFixture, ProviderError};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_url: "https://x.example".into(),
            doc_hash: "h".into(),
            start_token: 0,
            token_len: text.split_whitespace().count(),
            text: text.into(),
        }
    }

    fn spark(label: &str) -> SparkSpec {
        SparkSpec {
            label: label.into(),
            kind: "mechanism".into(),
            rationale: format!("why {label}"),
        }
    }

    fn fixture() -> MockFixture {
        MockFixture {
            chat: ChatFixture {
                context: vec![ContextRule {
                    query_contains: "remote team".into(),
                    nodes: vec![
                        NodeSpec {
                            label: "team".into(),
                            description: "the group".into(),
                        },
                        NodeSpec {
                            label: "communication".into(),
                            description: "".into(),
                        },
                    ],
                }],
                sparks: vec![
                    SparkRule {
                        chunk_contains: "first passage".into(),
                        nodes: vec![spark("waggle dance"), spark("quorum sensing")],
                    },
                    SparkRule {
                        chunk_contains: "second passage".into(),
                        nodes: vec![spark("mycelium"), spark("echolocation"), spark("tides")],
                    },
                    SparkRule {
                        chunk_contains: "third passage".into(),
                        nodes: vec![spark("Waggle  Dance")],
                    },
                ],
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn context_nodes_from_fixture() {
        let s = make_mock_suite(0, &fixture());
        let cfg = GraphBuildConfig::default();
        let q = "How can a remote team communicate better?";
        let nodes = extract_context_nodes(q, &s.chat, &cfg).unwrap();
        let labels: Vec<&str> = nodes.iter().map(|n| n.label.as_str()).collect();
        assert_eq!(labels, vec!["communication", "team"]);
        assert_eq!(nodes[0].node_id, "c0");
        assert!(nodes.iter().all(|n| n.origin == q));
        assert_eq!(nodes, extract_context_nodes(q, &s.chat, &cfg).unwrap());
        assert!(matches!(
            extract_context_nodes("  ", &s.chat, &cfg),
            Err(GraphError::InvalidInput(_))
        ));
    }

    #[test]
    fn context_call_uses_zero_temperature() {
        let s = make_mock_suite(0, &fixture());
        let (chat, log) = s.chat.capturing();
        extract_context_nodes("remote team", &chat, &GraphBuildConfig::default()).unwrap();
        assert_eq!(log.requests()[0].temperature, 0.0);
    }

    #[test]
    fn reprompts_once_then_fails() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let bad = ProviderHandle::chat_fn("bad", move |_| {
            c.fetch_add(1, Ordering::SeqCst);
            Ok("LABEL=x | broken".into())
        });
        let err = extract_context_nodes("q", &bad, &GraphBuildConfig::default()).unwrap_err();
        assert!(matches!(err, GraphError::ExtractionParse { .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 2);

        let n = Arc::new(AtomicUsize::new(0));
        let n2 = n.clone();
        let recovers = ProviderHandle::chat_fn("recovers", move |req| {
            if n2.fetch_add(1, Ordering::SeqCst) == 0 {
                Ok("garbage without records".into())
            } else {
                assert!(req.user_prompt.contains("FORMAT REMINDER"));
                Ok("LABEL=ok | DESC=fine".into())
            }
        });
        let nodes = extract_context_nodes("q", &recovers, &GraphBuildConfig::default()).unwrap();
        assert_eq!(nodes[0].label, "ok");
    }

    #[test]
    fn sparks_union_and_merge() {
        let s = make_mock_suite(0, &fixture());
        let cfg = GraphBuildConfig::default();
        let two = [chunk("k1", "first passage"), chunk("k2", "second passage")];
        let sparks = extract_spark_nodes(&two, "q", &s.chat, &cfg).unwrap();
        assert_eq!(sparks.len(), 5);
        assert_eq!(
            sparks.iter().map(|s| s.node_id.as_str()).collect::<Vec<_>>(),
            vec!["s0", "s1", "s2", "s3", "s4"]
        );

        let dup = [chunk("k1", "first passage"), chunk("k3", "third passage")];
        let sparks = extract_spark_nodes(&dup, "q", &s.chat, &cfg).unwrap();
        let waggle = sparks
            .iter()
            .find(|s| fold_label(&s.label) == "waggle dance")
            .unwrap();
        assert_eq!(waggle.source_chunk, "k1");
        assert_eq!(waggle.source_chunks, vec!["k1", "k3"]);
        assert_eq!(sparks.len(), 2);
    }

    #[test]
    fn empty_spark_replies_give_empty_list() {
        let none = ProviderHandle::chat_fn("none", |_| Ok("nothing here".into()));
        let sparks = extract_spark_nodes(
            &[chunk("a", "x"), chunk("b", "y")],
            "q",
            &none,
            &GraphBuildConfig::default(),
        )
        .unwrap();
        assert!(sparks.is_empty());
    }

    #[test]
    fn failing_chunk_is_skipped() {
        let h = ProviderHandle::chat_fn("mixed", |req| {
            if req.user_prompt.contains("poison") {
                Err(ProviderError::MalformedResponse("boom".into()))
            } else {
                Ok("LABEL=kept | KIND=property | RATIONALE=r".into())
            }
        });
        let cfg = GraphBuildConfig::default();
        let out = extract_spark_nodes(&[chunk("a", "poison"), chunk("b", "fine")], "q", &h, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].source_chunk, "b");
        assert!(extract_spark_nodes(&[chunk("a", "poison")], "q", &h, &cfg).is_err());
        assert!(matches!(
            extract_spark_nodes(&[], "q", &h, &cfg),
            Err(GraphError::InvalidInput(_))
        ));
    }

    fn sparks(n: usize) -> Vec<SparkNode> {
        (0..n)
            .map(|i| SparkNode {
                node_id: format!("s{i}"),
                label: format!("l{i}"),
                kind: SparkKind::Property,
                source_chunk: "k".into(),
                source_chunks: vec!["k".into()],
                rationale: String::new(),
            })
            .collect()
    }

    #[test]
    fn spark_sampling() {
        assert_eq!(sample_spark_nodes(&sparks(5), 7, 1).len(), 5);
        let pool = sparks(20);
        assert_eq!(sample_spark_nodes(&pool, 7, 9), sample_spark_nodes(&pool, 7, 9));
        // Hypergeometric inclusion probability 7 / 20 = 0.35.
        let trials = 10_000u64;
        let mut counts = vec![0usize; 20];
        for seed in 0..trials {
            for s in sample_spark_nodes(&pool, 7, seed) {
                counts[s.node_id[1..].parse::<usize>().unwrap()] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / trials as f64;
            assert!((f - 0.35).abs() <= 0.02, "{f}");
        }
    }
}
