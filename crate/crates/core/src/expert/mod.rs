//! Virtual specialist panel for diagnosis cases: phenotype synonym
//! expansion, per-persona nominations, semantic seed queries and the final
//! ranked differential.
//!
//! The ground-truth label of a case never reaches a prompt. Every prompt is
//! built from a [`BlindedCase`], which has no truth field.

mod diagnose;
mod ontology;
mod panel;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::ProviderError;
use crate::synthesis::PipelineError;

pub use diagnose::{
    diagnose, diagnose_prompt, parse_differential, truth_leaks, DiagnoseConfig, DiagnosisOutcome,
};
pub use ontology::{expand_synonyms, load_ontology, OntologyIndex, OntologyTerm};
pub use panel::{
    aggregate_hypotheses, aggregate_seed_queries, consult_panel, expert_prompt, ExpertNomination,
    HypothesisVote, PanelOutcome, PanelSubject,
};

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("ontology: {0}")]
    OntologyParse(String),
    #[error("case file line {line}: {detail}")]
    CaseParse { line: usize, detail: String },
    #[error("invalid case {case_id}: {detail}")]
    InvalidCase { case_id: String, detail: String },
    #[error("no personas on the panel")]
    NoPersonas,
    #[error("every persona failed: {}", .failures.iter().map(|(p, e)| format!("{p}: {e}")).collect::<Vec<_>>().join("; "))]
    AllExpertsFailed { failures: Vec<(String, String)> },
    #[error("case {case_id}: {source}")]
    Pipeline {
        case_id: String,
        #[source]
        source: PipelineError,
    },
    #[error("case {case_id}: differential reply unusable: {detail}")]
    DiagnoseParse { case_id: String, detail: String },
    #[error("case {case_id}: {source}")]
    Provider {
        case_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertPersona {
    pub persona_id: String,
    pub specialty: String,
    /// What this persona pays most attention to.
    pub focus: String,
    /// Free text; `{specialty}` and `{focus}` are substituted.
    pub prompt_template: String,
}

impl ExpertPersona {
    pub fn render_template(&self) -> String {
        self.prompt_template
            .replace("{specialty}", &self.specialty)
            .replace("{focus}", &self.focus)
    }
}

const TEMPLATE: &str = "You are a {specialty}. Study the presentation below and reason mainly \
about {focus}. Name the disorders you consider most likely and write search queries that would \
surface evidence for or against them.";

pub fn default_personas() -> Vec<ExpertPersona> {
    [
        (
            "clinical_geneticist",
            "Clinical Geneticist",
            "inheritance patterns",
        ),
        (
            "pediatric_neurologist",
            "Pediatric Neurologist",
            "brain involvement",
        ),
        (
            "metabolic_specialist",
            "Metabolic Specialist",
            "biochemical markers",
        ),
        ("pediatric_intensivist", "Pediatric Intensivist", "acute crises"),
        ("immunologist", "Immunologist", "systemic manifestations"),
    ]
    .into_iter()
    .map(|(id, specialty, focus)| ExpertPersona {
        persona_id: id.into(),
        specialty: specialty.into(),
        focus: focus.into(),
        prompt_template: TEMPLATE.into(),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phenotype {
    pub code: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisCase {
    pub case_id: String,
    pub phenotypes: Vec<Phenotype>,
    pub truth: String,
}

/// A case with its truth removed; the only form prompts are built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindedCase {
    pub case_id: String,
    pub phenotypes: Vec<Phenotype>,
}

fn is_hpo_code(code: &str) -> bool {
    code.strip_prefix("HP:")
        .is_some_and(|d| d.len() == 7 && d.bytes().all(|b| b.is_ascii_digit()))
}

impl DiagnosisCase {
    pub fn validate(&self) -> Result<(), ExpertError> {
        let bad = |detail: String| ExpertError::InvalidCase {
            case_id: self.case_id.clone(),
            detail,
        };
        if self.phenotypes.is_empty() {
            return Err(bad("no phenotypes".into()));
        }
        if let Some(p) = self.phenotypes.iter().find(|p| !is_hpo_code(&p.code)) {
            return Err(bad(format!("`{}` is not an HPO code", p.code)));
        }
        Ok(())
    }

    pub fn blinded(&self) -> BlindedCase {
        BlindedCase {
            case_id: self.case_id.clone(),
            phenotypes: self.phenotypes.clone(),
        }
    }
}

/// Parse JSON-lines cases, validating each.
pub fn parse_cases(text: &str) -> Result<Vec<DiagnosisCase>, ExpertError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: DiagnosisCase = serde_json::from_str(line).map_err(|e| ExpertError::CaseParse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        case.validate()?;
        out.push(case);
    }
    Ok(out)
}

pub fn load_cases(path: &Path) -> Result<Vec<DiagnosisCase>, ExpertError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExpertError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_cases(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_default_personas() {
        let p = default_personas();
        let ids: Vec<&str> = p.iter().map(|p| p.persona_id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "clinical_geneticist",
                "pediatric_neurologist",
                "metabolic_specialist",
                "pediatric_intensivist",
                "immunologist"
            ]
        );
        assert!(p[1].render_template().contains("brain involvement"));
    }

    #[test]
    fn case_validation() {
        let ok = r#"{"case_id":"a","phenotypes":[{"code":"HP:0000256","label":"Macrocephaly"}],"truth":"x"}"#;
        assert_eq!(parse_cases(ok).unwrap().len(), 1);
        let bad_code = r#"{"case_id":"a","phenotypes":[{"code":"HP:256","label":"M"}],"truth":"x"}"#;
        assert!(matches!(
            parse_cases(bad_code),
            Err(ExpertError::InvalidCase { .. })
        ));
        let empty = r#"{"case_id":"a","phenotypes":[],"truth":"x"}"#;
        assert!(parse_cases(empty).is_err());
        assert!(matches!(
            parse_cases("{"),
            Err(ExpertError::CaseParse { line: 1, .. })
        ));
    }
}
