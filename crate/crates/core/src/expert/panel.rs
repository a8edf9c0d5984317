use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{BlindedCase, ExpertError, ExpertPersona};
use crate::fanout::bounded_map;
use crate::grammar::{parse_records, render};
use crate::protocol::{ask_parsed, AskError, TASK_EXPERT};
use crate::providers::ProviderHandle;
use crate::text::casefold;

const SYSTEM: &str = "You are a physician on a diagnostic consultation panel. Answer only with \
records in the form FIELD=value | FIELD=value, one record per line.";

const REPLY_FORMAT: &str = "Reply with one HYPOTHESIS=<disease name> line per candidate, most \
likely first, then one RATIONALE=<short reasoning> line, then one to three QUERY=<search query> \
lines that would retrieve evidence to confirm or rule out your candidates.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertNomination {
    pub persona_id: String,
    pub hypotheses: Vec<String>,
    pub rationale: String,
    pub seed_queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelOutcome {
    pub nominations: Vec<ExpertNomination>,
    /// Personas dropped from the panel, with the reason.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisVote {
    pub label: String,
    pub votes: usize,
    pub personas: Vec<String>,
}

/// What the panel looks at: a blinded case or free text.
#[derive(Debug, Clone, Copy)]
pub enum PanelSubject<'a> {
    Case {
        case: &'a BlindedCase,
        expansions: &'a [String],
    },
    Text(&'a str),
}

pub fn expert_prompt(persona: &ExpertPersona, subject: &PanelSubject<'_>) -> String {
    let mut lines = vec![
        render(&[("TASK", TASK_EXPERT), ("PERSONA", &persona.persona_id)]),
        render(&[("SPECIALTY", &persona.specialty), ("FOCUS", &persona.focus)]),
        persona.render_template(),
    ];
    match subject {
        PanelSubject::Case { case, expansions } => {
            lines.push(format!("Case {} presents with these phenotypes:", case.case_id));
            for p in &case.phenotypes {
                lines.push(render(&[("CODE", &p.code), ("LABEL", &p.label)]));
            }
            if !expansions.is_empty() {
                lines.push(render(&[("SYNONYMS", &expansions.join("; "))]));
            }
        }
        PanelSubject::Text(text) => lines.push(render(&[("SUBJECT", text)])),
    }
    lines.push(REPLY_FORMAT.to_owned());
    lines.join("\n")
}

fn parse_nomination(reply: &str) -> Result<(Vec<String>, String, Vec<String>), String> {
    let records = parse_records(reply).map_err(|e| e.to_string())?;
    let mut hypotheses: Vec<String> = Vec::new();
    let mut rationale = String::new();
    let mut queries: Vec<String> = Vec::new();
    for r in &records {
        if let Some(h) = r.require("HYPOTHESIS") {
            if !hypotheses.iter().any(|x| casefold(x) == casefold(h)) {
                hypotheses.push(h.to_owned());
            }
        }
        if let Some(t) = r.require("RATIONALE") {
            if rationale.is_empty() {
                rationale = t.to_owned();
            }
        }
        if let Some(q) = r.require("QUERY") {
            queries.push(q.to_owned());
        }
    }
    if hypotheses.is_empty() {
        return Err("no HYPOTHESIS records".into());
    }
    Ok((hypotheses, rationale, queries))
}

/// One concurrent call per persona. A persona whose call or reply fails is
/// dropped with a warning; the panel fails only when nobody answered.
pub fn consult_panel(
    subject: PanelSubject<'_>,
    personas: &[ExpertPersona],
    chat: &ProviderHandle,
    temperature: f64,
    max_in_flight: usize,
) -> Result<PanelOutcome, ExpertError> {
    if personas.is_empty() {
        return Err(ExpertError::NoPersonas);
    }
    let replies = bounded_map(personas, max_in_flight, |_, p| {
        ask_parsed(
            chat,
            SYSTEM,
            &expert_prompt(p, &subject),
            temperature,
            parse_nomination,
        )
    });
    let mut out = PanelOutcome {
        nominations: Vec::new(),
        failures: Vec::new(),
    };
    for (p, reply) in personas.iter().zip(replies) {
        match reply {
            Ok((hypotheses, rationale, seed_queries)) => out.nominations.push(ExpertNomination {
                persona_id: p.persona_id.clone(),
                hypotheses,
                rationale,
                seed_queries,
            }),
            Err(e) => {
                let why = match e {
                    AskError::Provider(err) => err.to_string(),
                    AskError::Parse(d) => d,
                };
                log::warn!("persona {} dropped: {why}", p.persona_id);
                out.failures.push((p.persona_id.clone(), why));
            }
        }
    }
    if out.nominations.is_empty() {
        return Err(ExpertError::AllExpertsFailed {
            failures: out.failures,
        });
    }
    Ok(out)
}

/// Hypotheses ranked by the number of personas naming them; ties keep
/// first-nomination order.
pub fn aggregate_hypotheses(nominations: &[ExpertNomination]) -> Vec<HypothesisVote> {
    let mut votes: Vec<HypothesisVote> = Vec::new();
    for n in nominations {
        for h in &n.hypotheses {
            match votes.iter_mut().find(|v| casefold(&v.label) == casefold(h)) {
                Some(v) => {
                    v.votes += 1;
                    v.personas.push(n.persona_id.clone());
                }
                None => votes.push(HypothesisVote {
                    label: h.clone(),
                    votes: 1,
                    personas: vec![n.persona_id.clone()],
                }),
            }
        }
    }
    votes.sort_by_key(|v| std::cmp::Reverse(v.votes));
    votes
}

/// Expert queries interleaved round-robin by persona, then one query made of
/// the expansions, deduplicated and cut to `limit`.
pub fn aggregate_seed_queries(
    nominations: &[ExpertNomination],
    expansions: &[String],
    limit: usize,
) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |q: &str| {
        let q = q.split_whitespace().collect::<Vec<_>>().join(" ");
        if !q.is_empty() && seen.insert(casefold(&q)) {
            out.push(q);
        }
    };
    let depth = nominations
        .iter()
        .map(|n| n.seed_queries.len())
        .max()
        .unwrap_or(0);
    for round in 0..depth {
        for n in nominations {
            if let Some(q) = n.seed_queries.get(round) {
                push(q);
            }
        }
    }
    let phenotype_only: Vec<String> = expansions.iter().map(|e| casefold(e)).collect();
    push(&phenotype_only.join(" "));
    out.truncate(limit);
    out
}
