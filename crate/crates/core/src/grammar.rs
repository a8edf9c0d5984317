//! The line grammar every extraction, bridging, judging and panel call
//! answers in: one record per line, `FIELD=value | FIELD=value`.
//!
//! Field names are upper-case ASCII. Lines that carry no `=` are ignored so a
//! model may add chatter around its records; a line that looks like a record
//! but is malformed is an error.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("line {line}: malformed field `{field}`")]
    MalformedField { line: usize, field: String },
    #[error("line {line}: duplicate field `{field}`")]
    DuplicateField { line: usize, field: String },
    #[error("no records found")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Record {
    pub line: usize,
    fields: BTreeMap<String, String>,
}

impl Record {
    pub fn get(&self, field: &str) -> Option<&str> {
        self.fields.get(field).map(String::as_str)
    }

    /// Non-empty value of `field`.
    pub fn require(&self, field: &str) -> Option<&str> {
        self.get(field).filter(|v| !v.is_empty())
    }

    pub fn has(&self, field: &str) -> bool {
        self.fields.contains_key(field)
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Parse every record line of `text`.
pub fn parse_records(text: &str) -> Result<Vec<Record>, GrammarError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim().trim_start_matches(['-', '*']).trim();
        let Some((head, _)) = line.split_once('=') else {
            continue;
        };
        // Prose with an incidental `=` is not a record.
        if !valid_name(head.trim()) {
            continue;
        }
        let mut rec = Record {
            line: i + 1,
            fields: BTreeMap::new(),
        };
        for part in line.split('|') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let Some((k, v)) = part.split_once('=') else {
                return Err(GrammarError::MalformedField {
                    line: i + 1,
                    field: part.to_owned(),
                });
            };
            let k = k.trim();
            if !valid_name(k) {
                return Err(GrammarError::MalformedField {
                    line: i + 1,
                    field: part.to_owned(),
                });
            }
            if rec.fields.insert(k.to_owned(), v.trim().to_owned()).is_some() {
                return Err(GrammarError::DuplicateField {
                    line: i + 1,
                    field: k.to_owned(),
                });
            }
        }
        records.push(rec);
    }
    Ok(records)
}

/// Make `value` safe to embed as a single field value.
pub fn sanitize(value: &str) -> String {
    value
        .replace('|', "/")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Render one record line from `(field, value)` pairs.
pub fn render(fields: &[(&str, &str)]) -> String {
    fields
        .iter()
        .map(|(k, v)| format!("{k}={}", sanitize(v)))
        .collect::<Vec<_>>()
        .join(" | ")
}
