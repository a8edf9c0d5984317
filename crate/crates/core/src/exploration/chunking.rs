use std::collections::HashMap;

use super::{Chunk, ExplorationError, RetrievedDoc};
use crate::rng::sample_indices;
use crate::text::tokenize;

/// `(start, len)` token spans for a document of `token_count` tokens.
///
/// Windows start at multiples of `window - overlap` and the last window is
/// clamped to the document end. Enumeration stops at the first window that
/// reaches the end, so no window is ever a suffix of its predecessor.
pub fn chunk_spans(token_count: usize, window: usize, overlap: usize) -> Vec<(usize, usize)> {
    assert!(overlap < window, "overlap must be below window");
    let stride = window - overlap;
    let mut spans = Vec::new();
    let mut start = 0;
    while start < token_count {
        let len = window.min(token_count - start);
        spans.push((start, len));
        if start + len >= token_count {
            break;
        }
        start += stride;
    }
    spans
}

/// Cut every document into overlapping token windows.
pub fn chunk_docs(
    docs: &[RetrievedDoc],
    window: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, ExplorationError> {
    if overlap >= window {
        return Err(ExplorationError::InvalidConfig(format!(
            "overlap {overlap} must be below window {window}"
        )));
    }
    let mut seen_hashes: HashMap<&str, usize> = HashMap::new();
    let mut chunks = Vec::new();
    for d in docs {
        let tokens = tokenize(&d.body);
        let repeat = seen_hashes.entry(d.content_hash.as_str()).or_insert(0);
        let prefix = if *repeat == 0 {
            d.content_hash[..12.min(d.content_hash.len())].to_owned()
        } else {
            format!("{}.{}", &d.content_hash[..12.min(d.content_hash.len())], repeat)
        };
        *repeat += 1;
        for (start, len) in chunk_spans(tokens.len(), window, overlap) {
            chunks.push(Chunk {
                chunk_id: format!("{prefix}@{start}"),
                doc_url: d.url.clone(),
                doc_hash: d.content_hash.clone(),
                start_token: start,
                token_len: len,
                text: tokens[start..start + len].join(" "),
            });
        }
    }
    Ok(chunks)
}

/// `min(n, len)` chunks, uniformly without replacement, in draw order.
pub fn sample_chunks(chunks: &[Chunk], n: usize, rng_seed: u64) -> Vec<Chunk> {
    sample_indices(chunks.len(), n, rng_seed)
        .into_iter()
        .map(|i| chunks[i].clone())
        .collect()
}
