use serde::{Deserialize, Serialize};

use super::{
    aggregate_hypotheses, aggregate_seed_queries, consult_panel, expand_synonyms, BlindedCase, DiagnosisCase,
    ExpertError, ExpertNomination, ExpertPersona, HypothesisVote, OntologyIndex, PanelSubject,
};
use crate::grammar::{parse_records, render};
use crate::graph::EpistemicGraph;
use crate::metrics::{normalize_label, DiagnosisResult};
use crate::protocol::{ask_parsed, authored_sections, AskError, EVIDENCE_BEGIN, EVIDENCE_END, TASK_DIAGNOSE};
use crate::providers::ChatRequest;
use crate::synthesis::{
    build_graph, serialize_graph, PipelineConfig, Providers, SeedSource, SerializedGraph,
};
use crate::text::casefold;

const SYSTEM: &str = "You are a senior diagnostician. Answer only with records in the form \
FIELD=value | FIELD=value, one record per line.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseConfig {
    /// Length of the ranked differential.
    pub top_n: usize,
    /// Seed queries kept per case.
    pub per_case_limit: usize,
    pub panel_temperature: f64,
    pub diagnose_temperature: f64,
    pub max_in_flight: usize,
    pub pipeline: PipelineConfig,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            top_n: 10,
            per_case_limit: 5,
            panel_temperature: 0.7,
            diagnose_temperature: 0.0,
            max_in_flight: 5,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisOutcome {
    pub result: DiagnosisResult,
    pub nominations: Vec<ExpertNomination>,
    pub dropped_personas: Vec<(String, String)>,
    pub votes: Vec<HypothesisVote>,
    pub seed_queries: Vec<String>,
    pub graph: EpistemicGraph,
    pub serialized: SerializedGraph,
    pub warnings: Vec<String>,
}

fn case_query(case: &BlindedCase) -> String {
    let labels: Vec<&str> = case.phenotypes.iter().map(|p| p.label.as_str()).collect();
    format!(
        "Differential diagnosis for a patient presenting with {}",
        labels.join(", ")
    )
}

pub fn diagnose_prompt(
    case: &BlindedCase,
    votes: &[HypothesisVote],
    graph: &SerializedGraph,
    top_n: usize,
) -> String {
    let mut lines = vec![
        render(&[("TASK", TASK_DIAGNOSE), ("TOP_N", &top_n.to_string())]),
        format!("Case {} presents with these phenotypes:", case.case_id),
    ];
    for p in &case.phenotypes {
        lines.push(render(&[("CODE", &p.code), ("LABEL", &p.label)]));
    }
    lines.push(
        "The evidence block holds the panel's nominations with vote counts, followed by an \
         epistemic graph built from retrieved literature."
            .to_owned(),
    );
    lines.push(EVIDENCE_BEGIN.to_owned());
    for v in votes {
        lines.push(render(&[
            ("HYPOTHESIS", &v.label),
            ("VOTES", &v.votes.to_string()),
        ]));
    }
    lines.push(graph.text.trim_end().to_owned());
    lines.push(EVIDENCE_END.to_owned());
    lines.push(format!(
        "Rank the {top_n} most likely diagnoses. Reply with one line per diagnosis, best first: \
         RANK=<n> | DISEASE=<name>"
    ));
    lines.join("\n")
}

/// Disease names in rank order, duplicates dropped.
pub fn parse_differential(reply: &str) -> Result<Vec<String>, String> {
    let records = parse_records(reply).map_err(|e| e.to_string())?;
    let mut ranked: Vec<(usize, usize, String)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if let Some(d) = r.require("DISEASE") {
            let rank = r.get("RANK").and_then(|x| x.parse().ok()).unwrap_or(usize::MAX);
            ranked.push((rank, i, d.to_owned()));
        }
    }
    if ranked.is_empty() {
        return Err("no DISEASE records".into());
    }
    ranked.sort();
    let mut out: Vec<String> = Vec::new();
    for (_, _, d) in ranked {
        if !out.iter().any(|x| normalize_label(x) == normalize_label(&d)) {
            out.push(d);
        }
    }
    Ok(out)
}

/// Indices of requests whose system prompt or authored user text mentions
/// `truth`. Text inside evidence blocks is retrieved or model-derived and is
/// not checked.
pub fn truth_leaks(requests: &[ChatRequest], truth: &str) -> Vec<usize> {
    let needle = casefold(truth.trim());
    if needle.is_empty() {
        return Vec::new();
    }
    requests
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            casefold(&r.system_prompt).contains(&needle)
                || casefold(&authored_sections(&r.user_prompt)).contains(&needle)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Panel, semantic-seeded graph, then one ranked-differential call.
pub fn diagnose(
    case: &DiagnosisCase,
    personas: &[ExpertPersona],
    ontology: Option<&OntologyIndex>,
    providers: &Providers,
    cfg: &DiagnoseConfig,
) -> Result<DiagnosisOutcome, ExpertError> {
    case.validate()?;
    if cfg.top_n == 0 {
        return Err(ExpertError::InvalidCase {
            case_id: case.case_id.clone(),
            detail: "top_n must be >= 1".into(),
        });
    }
    let truth = case.truth.clone();
    let blinded = case.blinded();
    let expansions = match ontology {
        Some(o) => expand_synonyms(case, o),
        None => blinded.phenotypes.iter().map(|p| p.label.clone()).collect(),
    };
    let panel = consult_panel(
        PanelSubject::Case {
            case: &blinded,
            expansions: &expansions,
        },
        personas,
        &providers.chat,
        cfg.panel_temperature,
        cfg.max_in_flight,
    )?;
    let mut warnings: Vec<String> = panel
        .failures
        .iter()
        .map(|(p, e)| format!("persona {p} dropped: {e}"))
        .collect();
    let votes = aggregate_hypotheses(&panel.nominations);
    let seed_queries = aggregate_seed_queries(&panel.nominations, &expansions, cfg.per_case_limit);

    let run = build_graph(
        &case_query(&blinded),
        &cfg.pipeline,
        SeedSource::Queries(&seed_queries),
        providers,
    )
    .map_err(|source| ExpertError::Pipeline {
        case_id: blinded.case_id.clone(),
        source,
    })?;
    warnings.extend(run.warnings);
    let serialized = serialize_graph(&run.graph);

    let prompt = diagnose_prompt(&blinded, &votes, &serialized, cfg.top_n);
    let mut ranked = ask_parsed(
        &providers.chat,
        SYSTEM,
        &prompt,
        cfg.diagnose_temperature,
        parse_differential,
    )
    .map_err(|e| match e {
        AskError::Provider(source) => ExpertError::Provider {
            case_id: blinded.case_id.clone(),
            source,
        },
        AskError::Parse(detail) => ExpertError::DiagnoseParse {
            case_id: blinded.case_id.clone(),
            detail,
        },
    })?;
    ranked.truncate(cfg.top_n);

    Ok(DiagnosisOutcome {
        result: DiagnosisResult {
            case_id: blinded.case_id,
            ranked_candidates: ranked,
            truth,
        },
        nominations: panel.nominations,
        dropped_personas: panel.failures,
        votes,
        seed_queries,
        graph: run.graph,
        serialized,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differential_parsing() {
        let r = parse_differential("RANK=2 | DISEASE=B\nRANK=1 | DISEASE=A\nRANK=3 | DISEASE=a\n").unwrap();
        assert_eq!(r, vec!["A", "B"]);
        assert!(parse_differential("no idea").is_err());
    }

    #[test]
    fn leak_detection_ignores_evidence() {
        let clean = ChatRequest::new(
            "sys",
            format!("TASK=x\n{EVIDENCE_BEGIN}\nGA-I here\n{EVIDENCE_END}"),
            0.0,
        );
        let dirty = ChatRequest::new("sys", "TASK=x\nthe answer is ga-i", 0.0);
        assert_eq!(truth_leaks(&[clean, dirty], "GA-I"), vec![1]);
    }
}
