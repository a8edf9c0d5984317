use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use url::Url;

use super::RetrievedDoc;
use crate::text::shannon_entropy;

const TRACKING_PARAMS: &[&str] = &[
    "gclid", "fbclid", "msclkid", "dclid", "yclid", "mc_cid", "mc_eid", "igshid", "ref", "ref_src", "_hsenc",
    "_hsmi",
];

/// Lowercase scheme and host, drop the fragment, drop tracking parameters.
/// Strings that do not parse as URLs are only trimmed and lowercased.
pub fn canonicalize_url(raw: &str) -> String {
    let Ok(mut u) = Url::parse(raw.trim()) else {
        return raw.trim().to_lowercase();
    };
    u.set_fragment(None);
    let kept: Vec<(String, String)> = u
        .query_pairs()
        .filter(|(k, _)| {
            let k = k.to_ascii_lowercase();
            !k.starts_with("utm_") && !TRACKING_PARAMS.contains(&k.as_str())
        })
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    if kept.is_empty() {
        u.set_query(None);
    } else {
        u.query_pairs_mut().clear().extend_pairs(kept);
    }
    u.to_string()
}

/// Keep the first document for each canonical URL, then the first for each
/// content hash. Order of survivors is unchanged.
pub fn dedup(docs: Vec<RetrievedDoc>) -> Vec<RetrievedDoc> {
    let mut urls = HashSet::new();
    let by_url: Vec<RetrievedDoc> = docs
        .into_iter()
        .filter(|d| urls.insert(canonicalize_url(&d.url)))
        .collect();
    let mut hashes = HashSet::new();
    by_url
        .into_iter()
        .filter(|d| hashes.insert(d.content_hash.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_body_chars: usize,
    /// Character-level Shannon entropy floor, bits.
    pub min_entropy_bits: f64,
    /// Highest tolerated fraction of lines that are bare links or menu items.
    pub max_link_density: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_body_chars: 200,
            min_entropy_bits: 2.5,
            max_link_density: 0.5,
        }
    }
}

fn is_link_marker(line: &str) -> bool {
    let l = line.trim();
    let bare_url = !l.contains(char::is_whitespace)
        && (l.starts_with("http://") || l.starts_with("https://") || l.starts_with("www."));
    if bare_url {
        return true;
    }
    // Menu items: a few words, no sentence punctuation.
    let words = l.split_whitespace().count();
    words <= 3 && l.chars().count() <= 30 && !l.contains(['.', ',', ';', ':', '?', '!'])
}

/// Fraction of non-blank lines that are bare URLs or menu tokens.
pub fn link_marker_density(body: &str) -> f64 {
    let lines: Vec<&str> = body.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return 0.0;
    }
    lines.iter().filter(|l| is_link_marker(l)).count() as f64 / lines.len() as f64
}

/// Drop short, low-entropy and link-dominated pages.
pub fn filter_content(docs: Vec<RetrievedDoc>, cfg: &FilterConfig) -> Vec<RetrievedDoc> {
    docs.into_iter()
        .filter(|d| {
            let chars = d.body.chars().count();
            if chars < cfg.min_body_chars {
                log::debug!("drop {}: {chars} chars", d.url);
                return false;
            }
            let h = shannon_entropy(&d.body);
            if h < cfg.min_entropy_bits {
                log::debug!("drop {}: entropy {h:.2} bits", d.url);
                return false;
            }
            let density = link_marker_density(&d.body);
            if density > cfg.max_link_density {
                log::debug!("drop {}: link density {density:.2}", d.url);
                return false;
            }
            true
        })
        .collect()
}
