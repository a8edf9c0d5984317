use serde::{Deserialize, Serialize};

use super::{Mode, Placement, SerializedGraph, SynthesisConfig, SynthesisError};
use crate::clock::Clock;
use crate::grammar::render;
use crate::protocol::{EVIDENCE_BEGIN, EVIDENCE_END, TASK_GENERATE};
use crate::providers::{ChatRequest, ProviderHandle, Usage};

const SYSTEM: &str = "You are an inventive problem solver. Answer the user's query directly.";

const INSTRUCTIONS: &str = "Write one complete answer to the query below.";

const PRISM_GUIDE: &str = "The evidence block is an epistemic graph. Context nodes are the \
fixed constraints of the query. Spark nodes are mechanisms, properties and byproducts taken \
from unrelated material. Each bridge links two nodes through Mapping, Blending or Inversion. \
Reason along the bridges and let them shape an unconventional answer that still honours every \
context node.";

const FLAT_GUIDE: &str = "The evidence block holds retrieved passages. Use whatever in them \
helps you answer.";

/// What one generation call needs besides the provider and config.
#[derive(Debug, Clone, Copy)]
pub struct GenerationInput<'a> {
    pub run_id: &'a str,
    pub query: &'a str,
    pub mode: Mode,
    pub graph: Option<&'a SerializedGraph>,
    pub chunks: Option<&'a [String]>,
    /// Passed to the backend as its sampling seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub run_id: String,
    pub mode: Mode,
    pub query: String,
    pub serialized_graph: Option<SerializedGraph>,
    /// Number of raw chunks injected in flat-RAG mode.
    #[serde(default)]
    pub chunk_count: usize,
    pub system_prompt: String,
    /// The exact user prompt sent to the model.
    pub prompt: String,
    pub output: String,
    pub provider_id: String,
    pub temperature: f64,
    pub usage: Usage,
    pub started_at: u64,
    pub finished_at: u64,
}

/// Assemble the user prompt for `input`, checking that the mode got exactly
/// the material it needs.
pub fn build_prompt(input: &GenerationInput<'_>, placement: Placement) -> Result<String, SynthesisError> {
    let mismatch = |detail: &str| SynthesisError::ModeArgumentMismatch {
        mode: input.mode,
        detail: detail.to_owned(),
    };
    let evidence: Option<(&str, String)> = match (input.mode, input.graph, input.chunks) {
        (Mode::Vanilla, None, None) => None,
        (Mode::Vanilla, _, _) => return Err(mismatch("vanilla takes neither a graph nor chunks")),
        (Mode::FlatRag, None, Some(chunks)) => Some((FLAT_GUIDE, chunks.join("\n\n"))),
        (Mode::FlatRag, _, None) => return Err(mismatch("flat_rag requires chunks")),
        (Mode::FlatRag, Some(_), _) => return Err(mismatch("flat_rag takes no graph")),
        (Mode::Prism, Some(g), None) => Some((PRISM_GUIDE, g.text.trim_end().to_owned())),
        (Mode::Prism, None, _) => return Err(mismatch("prism requires a serialized graph")),
        (Mode::Prism, Some(_), Some(_)) => return Err(mismatch("prism takes no raw chunks")),
    };
    let mode = input.mode.as_str();
    let mut lines = vec![
        render(&[("TASK", TASK_GENERATE), ("MODE", mode)]),
        INSTRUCTIONS.to_owned(),
    ];
    let query = format!("QUERY: {}", input.query.trim());
    match evidence {
        None => lines.push(query),
        Some((guide, body)) => {
            let block = [EVIDENCE_BEGIN.to_owned(), body, EVIDENCE_END.to_owned()].join("\n");
            match placement {
                Placement::AfterQuery => lines.extend([query, guide.to_owned(), block]),
                Placement::BeforeQuery => lines.extend([guide.to_owned(), block, query]),
            }
        }
    }
    Ok(lines.join("\n"))
}

/// One chat call producing the final answer.
pub fn generate(
    input: &GenerationInput<'_>,
    chat: &ProviderHandle,
    cfg: &SynthesisConfig,
    clock: &Clock,
) -> Result<GenerationRecord, SynthesisError> {
    if input.query.trim().is_empty() {
        return Err(SynthesisError::InvalidInput("query is empty".into()));
    }
    let prompt = build_prompt(input, cfg.placement)?;
    let started_at = clock.now_unix();
    let mut req = ChatRequest::new(SYSTEM, prompt.clone(), cfg.temperature);
    req.max_tokens = cfg.max_tokens;
    req.seed = input.seed;
    let resp = chat.chat_complete(&req)?;
    if resp.text.trim().is_empty() {
        return Err(SynthesisError::EmptyOutput {
            provider: resp.provider_id,
        });
    }
    Ok(GenerationRecord {
        run_id: input.run_id.to_owned(),
        mode: input.mode,
        query: input.query.to_owned(),
        serialized_graph: input.graph.cloned(),
        chunk_count: input.chunks.map_or(0, <[String]>::len),
        system_prompt: SYSTEM.to_owned(),
        prompt,
        output: resp.text,
        provider_id: resp.provider_id,
        temperature: cfg.temperature,
        usage: resp.usage,
        started_at,
        finished_at: clock.now_unix(),
    })
}
