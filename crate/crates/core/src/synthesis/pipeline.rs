use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{
    generate, serialize_graph, GenerationInput, GenerationRecord, Mode, SynthesisConfig, SynthesisError,
    LAYOUT_VERSION,
};
use crate::clock::Clock;
use crate::exploration::{
    build_queries, chunk_docs, dedup, filter_content, retrieve_all, sample_chunks, sample_seeds, Chunk,
    ExplorationConfig, ExplorationError, Lexicon, QueryMode, RetrievedDoc, SeedSet,
};
use crate::graph::{
    assemble_graph, extract_context_nodes, extract_spark_nodes, generate_edges, sample_spark_nodes,
    EpistemicGraph, GraphBuildConfig, GraphError, Provenance, RejectedBridge,
};
use crate::json::{to_canonical_string, to_jsonl};
use crate::persistence::{self, atomic_write, ArtifactStore, StoreError};
use crate::providers::ProviderHandle;
use crate::rng::{stage_seed, RNG_ALGORITHM};
use crate::text::sha256_hex;

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Exploration(#[from] ExplorationError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: StageError,
}

fn at<E: Into<StageError>>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        source: e.into(),
    }
}

/// Every knob of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub exploration: ExplorationConfig,
    pub graph: GraphBuildConfig,
    pub synthesis: SynthesisConfig,
    pub rng_seed: u64,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            exploration: ExplorationConfig::default(),
            graph: GraphBuildConfig::default(),
            synthesis: SynthesisConfig::default(),
            rng_seed: 0,
            mode: Mode::Prism,
        }
    }
}

/// Where the run's seeds come from.
#[derive(Debug, Clone, Copy)]
pub enum SeedSource<'a> {
    /// Draw `k` nouns from the lexicon.
    Lexicon(&'a Lexicon),
    /// Complete search queries, e.g. from an expert panel.
    Queries(&'a [String]),
}

#[derive(Debug, Clone)]
pub struct Providers {
    pub chat: ProviderHandle,
    pub search: ProviderHandle,
}

/// Where run artifacts go. With no `runs_root` nothing is written.
#[derive(Debug, Clone, Default)]
pub struct RunSink {
    pub runs_root: Option<PathBuf>,
    pub store: Option<ArtifactStore>,
    pub clock: Clock,
}

impl RunSink {
    pub fn in_memory(clock: Clock) -> Self {
        Self {
            runs_root: None,
            store: None,
            clock,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub record: GenerationRecord,
    pub seeds: Option<SeedSet>,
    pub docs: Vec<RetrievedDoc>,
    pub chunks: Vec<Chunk>,
    pub graph: Option<EpistemicGraph>,
    pub rejected_bridges: Vec<RejectedBridge>,
    pub warnings: Vec<String>,
    pub run_dir: Option<PathBuf>,
    /// File name to SHA-256 of its bytes; `meta.json` itself excluded.
    pub artifacts: BTreeMap<String, String>,
}

/// Stable id from everything that determines the run's content.
pub fn derive_run_id(query: &str, cfg: &PipelineConfig, seeds: &SeedSource<'_>) -> String {
    let source = match seeds {
        SeedSource::Lexicon(l) => json!({"lexicon": l.source_id(), "nouns": l.nouns()}),
        SeedSource::Queries(q) => json!({"queries": q}),
    };
    let key = to_canonical_string(&json!({"query": query, "config": cfg, "seeds": source}));
    format!("{}-{}", cfg.mode.as_str(), &sha256_hex(key.as_bytes())[..16])
}

struct Explored {
    seeds: SeedSet,
    docs: Vec<RetrievedDoc>,
    chunks: Vec<Chunk>,
}

fn explore(
    query: &str,
    cfg: &PipelineConfig,
    source: &SeedSource<'_>,
    search: &ProviderHandle,
) -> Result<Explored, PipelineError> {
    let ex = &cfg.exploration;
    ex.validate().map_err(at("config"))?;
    let (seeds, mode) = match source {
        SeedSource::Lexicon(lex) => (
            sample_seeds(lex, ex.k, stage_seed(cfg.rng_seed, "seeds")).map_err(at("seeds"))?,
            ex.query_mode,
        ),
        SeedSource::Queries(q) => (SeedSet::semantic(q.to_vec(), cfg.rng_seed), QueryMode::Semantic),
    };
    let queries = build_queries(&seeds, query, mode);
    let raw = retrieve_all(&queries, search, ex.per_seed_result_limit, ex.max_in_flight)
        .map_err(at("retrieval"))?;
    let docs = filter_content(dedup(raw), &ex.filter);
    let all = chunk_docs(&docs, ex.window, ex.overlap).map_err(at("chunking"))?;
    let chunks = sample_chunks(&all, ex.chunk_sample_n, stage_seed(cfg.rng_seed, "chunks"));
    Ok(Explored { seeds, docs, chunks })
}

/// A graph built from explored material.
#[derive(Debug, Clone)]
pub struct GraphRun {
    pub seeds: SeedSet,
    pub docs: Vec<RetrievedDoc>,
    pub chunks: Vec<Chunk>,
    pub graph: EpistemicGraph,
    pub rejected: Vec<RejectedBridge>,
    pub warnings: Vec<String>,
}

struct Built {
    graph: EpistemicGraph,
    rejected: Vec<RejectedBridge>,
    warnings: Vec<String>,
}

fn graph_from_chunks(
    query: &str,
    cfg: &PipelineConfig,
    ex: &Explored,
    providers: &Providers,
) -> Result<Built, PipelineError> {
    cfg.graph.validate().map_err(at("config"))?;
    let mut warnings = Vec::new();
    let mut rejected = Vec::new();
    let context = extract_context_nodes(query, &providers.chat, &cfg.graph).map_err(at("context"))?;
    let sparks = if ex.chunks.is_empty() {
        warnings.push("no chunks survived hygiene; graph has context nodes only".to_owned());
        Vec::new()
    } else {
        let all =
            extract_spark_nodes(&ex.chunks, query, &providers.chat, &cfg.graph).map_err(at("sparks"))?;
        sample_spark_nodes(&all, cfg.graph.spark_limit, stage_seed(cfg.rng_seed, "sparks"))
    };
    let edges = if sparks.is_empty() {
        Vec::new()
    } else {
        let out =
            generate_edges(query, &context, &sparks, &providers.chat, &cfg.graph).map_err(at("bridges"))?;
        rejected = out.rejected;
        out.edges
    };
    let provenance = Provenance {
        seed_set: Some(ex.seeds.clone()),
        chunk_ids: ex.chunks.iter().map(|c| c.chunk_id.clone()).collect(),
        rng_seed: cfg.rng_seed,
        provider_ids: vec![providers.search.id().to_owned(), providers.chat.id().to_owned()],
    };
    let graph = assemble_graph(query, context, sparks, edges, provenance).map_err(at("assembly"))?;
    Ok(Built {
        graph,
        rejected,
        warnings,
    })
}

/// Exploration and graph construction without the generation call.
pub fn build_graph(
    query: &str,
    cfg: &PipelineConfig,
    source: SeedSource<'_>,
    providers: &Providers,
) -> Result<GraphRun, PipelineError> {
    let ex = explore(query, cfg, &source, &providers.search)?;
    let built = graph_from_chunks(query, cfg, &ex, providers)?;
    Ok(GraphRun {
        seeds: ex.seeds,
        docs: ex.docs,
        chunks: ex.chunks,
        graph: built.graph,
        rejected: built.rejected,
        warnings: built.warnings,
    })
}

/// Run one query end to end and persist every intermediate artifact under
/// `runs/<run_id>/` when the sink has a root.
pub fn run_pipeline(
    query: &str,
    cfg: &PipelineConfig,
    source: SeedSource<'_>,
    providers: &Providers,
    sink: &RunSink,
) -> Result<RunOutput, PipelineError> {
    let started_at = sink.clock.now_unix();
    let run_id = derive_run_id(query, cfg, &source);
    let mut warnings = Vec::new();
    let mut rejected = Vec::new();
    let explored = match cfg.mode {
        Mode::Vanilla => None,
        Mode::FlatRag | Mode::Prism => Some(explore(query, cfg, &source, &providers.search)?),
    };

    let mut graph = None;
    let mut serialized = None;
    if cfg.mode == Mode::Prism {
        let ex = explored.as_ref().expect("prism explores");
        let built = graph_from_chunks(query, cfg, ex, providers)?;
        warnings.extend(built.warnings);
        rejected = built.rejected;
        serialized = Some(serialize_graph(&built.graph));
        graph = Some(built.graph);
    }

    let chunk_texts: Option<Vec<String>> = match cfg.mode {
        Mode::FlatRag => explored
            .as_ref()
            .map(|e| e.chunks.iter().map(|c| c.text.clone()).collect()),
        _ => None,
    };
    let input = GenerationInput {
        run_id: &run_id,
        query,
        mode: cfg.mode,
        graph: serialized.as_ref(),
        chunks: chunk_texts.as_deref(),
        seed: Some(cfg.rng_seed),
    };
    let record = generate(&input, &providers.chat, &cfg.synthesis, &sink.clock).map_err(at("generation"))?;

    let (seeds, docs, chunks) = match explored {
        Some(e) => (Some(e.seeds), e.docs, e.chunks),
        None => (None, Vec::new(), Vec::new()),
    };
    let mut out = RunOutput {
        run_id,
        record,
        seeds,
        docs,
        chunks,
        graph,
        rejected_bridges: rejected,
        warnings,
        run_dir: None,
        artifacts: BTreeMap::new(),
    };
    for w in &out.warnings {
        log::warn!("{}: {w}", out.run_id);
    }
    if let Some(root) = &sink.runs_root {
        persist_run(root, &mut out, cfg, providers, sink, started_at).map_err(at("persistence"))?;
    }
    Ok(out)
}

fn persist_run(
    root: &Path,
    out: &mut RunOutput,
    cfg: &PipelineConfig,
    providers: &Providers,
    sink: &RunSink,
    started_at: u64,
) -> Result<(), StoreError> {
    let dir = root.join(&out.run_id);
    let mut files: Vec<(&str, String, &str)> = Vec::new();
    if let Some(s) = &out.seeds {
        files.push(("seeds.json", to_canonical_string(s), persistence::SCHEMA_SEEDS));
        files.push(("docs.jsonl", to_jsonl(&out.docs), persistence::SCHEMA_DOCS));
        files.push(("chunks.jsonl", to_jsonl(&out.chunks), persistence::SCHEMA_CHUNKS));
    }
    if let Some(g) = &out.graph {
        files.push(("graph.json", g.to_json(), persistence::SCHEMA_GRAPH));
        let text = out
            .record
            .serialized_graph
            .as_ref()
            .map(|s| s.text.clone())
            .unwrap_or_default();
        files.push(("serialized.txt", text, persistence::SCHEMA_BLOB));
    }
    files.push((
        "generation.json",
        to_canonical_string(&out.record),
        persistence::SCHEMA_GENERATION,
    ));

    for (name, body, schema) in &files {
        atomic_write(&dir.join(name), body.as_bytes())?;
        let digest = match &sink.store {
            Some(store) => store.put(body.as_bytes(), schema)?.digest,
            None => sha256_hex(body.as_bytes()),
        };
        out.artifacts.insert((*name).to_owned(), digest);
    }

    let meta = json!({
        "schema": persistence::SCHEMA_META,
        "run_id": out.run_id,
        "query": out.record.query,
        "mode": cfg.mode,
        "rng_seed": cfg.rng_seed,
        "rng_algorithm": RNG_ALGORITHM,
        "stage_seeds": {
            "seeds": stage_seed(cfg.rng_seed, "seeds"),
            "chunks": stage_seed(cfg.rng_seed, "chunks"),
            "sparks": stage_seed(cfg.rng_seed, "sparks"),
        },
        "configs": {
            "exploration": cfg.exploration,
            "graph": cfg.graph,
            "synthesis": cfg.synthesis,
        },
        "provider_ids": {
            "chat": providers.chat.id(),
            "search": providers.search.id(),
        },
        "layout_version": LAYOUT_VERSION,
        "artifacts": out.artifacts,
        "warnings": out.warnings,
        "rejected_bridges": out.rejected_bridges,
        "started_at": started_at,
        "finished_at": sink.clock.now_unix(),
    });
    let body = to_canonical_string(&meta);
    atomic_write(&dir.join("meta.json"), body.as_bytes())?;
    if let Some(store) = &sink.store {
        store.put(body.as_bytes(), persistence::SCHEMA_META)?;
    }
    out.run_dir = Some(dir);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{make_mock_suite, FixtureDoc, MockFixture};

    fn lexicon() -> Lexicon {
        Lexicon::new((0..20).map(|i| format!("noun{i}")).collect(), "t").unwrap()
    }

    fn providers(fx: &MockFixture, seed: u64) -> Providers {
        let s = make_mock_suite(seed, fx);
        Providers {
            chat: s.chat,
            search: s.search,
        }
    }

    #[test]
    fn empty_search_gives_context_only_graph() {
        let fx = MockFixture::default();
        let out = run_pipeline(
            "design a quieter office",
            &PipelineConfig::default(),
            SeedSource::Lexicon(&lexicon()),
            &providers(&fx, 1),
            &RunSink::in_memory(Clock::Fixed(0)),
        )
        .unwrap();
        let g = out.graph.unwrap();
        assert!(!g.context_nodes.is_empty());
        assert!(g.spark_nodes.is_empty() && g.edges.is_empty());
        assert_eq!(out.warnings.len(), 1);
        assert!(out.record.prompt.contains("BRIDGES:"));
    }

    #[test]
    fn stage_errors_are_annotated() {
        let fx = MockFixture::default();
        let tiny = Lexicon::new(vec!["a".into(), "b".into()], "t").unwrap();
        let err = run_pipeline(
            "q",
            &PipelineConfig::default(),
            SeedSource::Lexicon(&tiny),
            &providers(&fx, 1),
            &RunSink::in_memory(Clock::Fixed(0)),
        )
        .unwrap_err();
        assert_eq!(err.stage, "seeds");
        assert!(err.to_string().contains("seeds"));
    }

    #[test]
    fn vanilla_skips_retrieval() {
        let fx = MockFixture {
            corpus: vec![FixtureDoc {
                url: "u".into(),
                title: "".into(),
                body: "noun1 ".repeat(100),
            }],
            ..Default::default()
        };
        let cfg = PipelineConfig {
            mode: Mode::Vanilla,
            ..Default::default()
        };
        let out = run_pipeline(
            "q",
            &cfg,
            SeedSource::Lexicon(&lexicon()),
            &providers(&fx, 1),
            &RunSink::in_memory(Clock::Fixed(0)),
        )
        .unwrap();
        assert!(out.seeds.is_none() && out.docs.is_empty());
        assert!(!out.record.prompt.contains("noun1"));
    }

    #[test]
    fn run_ids_track_inputs() {
        let lex = lexicon();
        let a = derive_run_id("q", &PipelineConfig::default(), &SeedSource::Lexicon(&lex));
        let b = derive_run_id(
            "q",
            &PipelineConfig {
                rng_seed: 1,
                ..Default::default()
            },
            &SeedSource::Lexicon(&lex),
        );
        assert_ne!(a, b);
        assert_eq!(
            a,
            derive_run_id("q", &PipelineConfig::default(), &SeedSource::Lexicon(&lex))
        );
        assert!(a.starts_with("prism-"));
    }
}
