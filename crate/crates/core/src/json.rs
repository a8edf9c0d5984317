//! Canonical JSON: object keys sorted, stable across runs.

use serde::Serialize;

/// Pretty JSON with sorted object keys and a trailing newline.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    // `serde_json::Value` maps are BTreeMaps unless `preserve_order` is on.
    let v = serde_json::to_value(value).expect("value serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// One compact, key-sorted JSON object per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        let v = serde_json::to_value(item).expect("value serializes");
        out.push_str(&serde_json::to_string(&v).expect("value serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
