//! Text normalization, tokenization and digests.
//!
//! A token is a whitespace-delimited word of the NFC-normalized text. No
//! model tokenizer is involved, so chunk boundaries do not depend on which
//! provider is configured.

use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Whitespace tokens of the NFC form of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    nfc(text).split_whitespace().map(str::to_owned).collect()
}

/// NFC, collapse whitespace runs to one space, casefold.
pub fn normalize_for_hash(text: &str) -> String {
    let folded = casefold(&nfc(text));
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Unicode lowercase folding. Full casefolding tables are not needed for the
/// mirror detection this serves.
pub fn casefold(text: &str) -> String {
    text.to_lowercase()
}

/// Case-folded and whitespace-collapsed form used for label comparison.
pub fn fold_label(text: &str) -> String {
    casefold(text).split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the normalized body, as stored in `RetrievedDoc::content_hash`.
pub fn content_hash(body: &str) -> String {
    sha256_hex(normalize_for_hash(body).as_bytes())
}

/// Character-level Shannon entropy in bits.
pub fn shannon_entropy(text: &str) -> f64 {
    let mut counts = std::collections::HashMap::<char, usize>::new();
    let mut total = 0usize;
    for c in text.chars() {
        *counts.entry(c).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "after",
    "all",
    "also",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "been",
    "but",
    "by",
    "can",
    "could",
    "do",
    "does",
    "for",
    "from",
    "had",
    "has",
    "have",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "may",
    "more",
    "most",
    "not",
    "of",
    "on",
    "one",
    "or",
    "other",
    "our",
    "over",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "them",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "under",
    "up",
    "use",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "why",
    "will",
    "with",
    "within",
    "would",
    "you",
    "your",
    "based",
    "following",
    "ways",
    "way",
    "using",
    "often",
    "without",
    "between",
    "each",
    "many",
    "much",
    "very",
    "make",
    "new",
    "help",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

/// Lowercased alphanumeric words with stopwords removed, first-occurrence
/// order, no repeats.
pub fn content_words(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for raw in casefold(text).split(|c: char| !c.is_alphanumeric() && c != '-') {
        let w = raw.trim_matches('-');
        if w.chars().count() < 3 || is_stopword(w) || w.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        if !out.iter().any(|o| o == w) {
            out.push(w.to_owned());
        }
    }
    out
}
