use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiagnosisCase, ExpertError};
use crate::text::casefold;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyTerm {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyIndex {
    pub version: String,
    terms: BTreeMap<String, OntologyTerm>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OntologyFile {
    Versioned {
        #[serde(default)]
        version: String,
        terms: Vec<OntologyTerm>,
    },
    Flat(Vec<OntologyTerm>),
}

impl OntologyIndex {
    pub fn new(version: impl Into<String>, terms: Vec<OntologyTerm>) -> Self {
        Self {
            version: version.into(),
            terms: terms.into_iter().map(|t| (t.id.clone(), t)).collect(),
        }
    }

    /// Parse either `{version, terms: [...]}` or a bare list of terms.
    pub fn parse(text: &str, fallback_version: &str) -> Result<Self, ExpertError> {
        let file: OntologyFile =
            serde_json::from_str(text).map_err(|e| ExpertError::OntologyParse(e.to_string()))?;
        let (version, terms) = match file {
            OntologyFile::Versioned { version, terms } if !version.is_empty() => (version, terms),
            OntologyFile::Versioned { terms, .. } | OntologyFile::Flat(terms) => {
                (fallback_version.to_owned(), terms)
            }
        };
        if let Some(t) = terms.iter().find(|t| t.label.trim().is_empty()) {
            return Err(ExpertError::OntologyParse(format!("term {} has no label", t.id)));
        }
        Ok(Self::new(version, terms))
    }

    pub fn get(&self, id: &str) -> Option<&OntologyTerm> {
        self.terms.get(id)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Read an ontology file; the version defaults to the file stem.
pub fn load_ontology(path: &Path) -> Result<OntologyIndex, ExpertError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExpertError::OntologyParse(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unversioned");
    OntologyIndex::parse(&text, stem)
}

/// Each phenotype's label followed by its ontology label and synonyms,
/// case-insensitively deduplicated in first-seen order. Codes the ontology
/// lacks contribute their given label alone.
pub fn expand_synonyms(case: &DiagnosisCase, ont: &OntologyIndex) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |s: &str| {
        let s = s.trim();
        if !s.is_empty() && seen.insert(casefold(s)) {
            out.push(s.to_owned());
        }
    };
    for p in &case.phenotypes {
        push(&p.label);
        if let Some(t) = ont.get(&p.code) {
            push(&t.label);
            t.synonyms.iter().for_each(|s| push(s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::Phenotype;

    fn ont() -> OntologyIndex {
        OntologyIndex::parse(
            r#"{"version": "test", "terms": [
                {"id": "HP:0000256", "label": "Macrocephaly", "synonyms": ["Large head", "Megalencephaly"]},
                {"id": "HP:0001332", "label": "Dystonia", "synonyms": ["Dystonic movements", "large head"]},
                {"id": "HP:0001252", "label": "Hypotonia", "synonyms": []}
            ]}"#,
            "x",
        )
        .unwrap()
    }

    fn case(codes: &[(&str, &str)]) -> DiagnosisCase {
        DiagnosisCase {
            case_id: "c".into(),
            phenotypes: codes
                .iter()
                .map(|(c, l)| Phenotype {
                    code: c.to_string(),
                    label: l.to_string(),
                })
                .collect(),
            truth: "t".into(),
        }
    }

    #[test]
    fn lookups() {
        let o = ont();
        assert_eq!(o.len(), 3);
        assert_eq!(o.version, "test");
        let t = o.get("HP:0000256").unwrap();
        assert_eq!(t.label, "Macrocephaly");
        assert!(t.synonyms.contains(&"Large head".to_string()));
        assert!(o.get("HP:9999999").is_none());
        assert!(OntologyIndex::parse("{", "x").is_err());
    }

    #[test]
    fn expansion_rules() {
        let o = ont();
        assert_eq!(
            expand_synonyms(&case(&[("HP:0000256", "Macrocephaly")]), &o),
            vec!["Macrocephaly", "Large head", "Megalencephaly"]
        );
        assert_eq!(
            expand_synonyms(&case(&[("HP:1234567", "Odd sign")]), &o),
            vec!["Odd sign"]
        );
        let both = expand_synonyms(
            &case(&[("HP:0000256", "Macrocephaly"), ("HP:0001332", "Dystonia")]),
            &o,
        );
        assert_eq!(both.iter().filter(|s| casefold(s) == "large head").count(), 1);
        assert_eq!(both.len(), 5);
    }
}
