use super::{ExplorationError, RetrievedDoc};
use crate::fanout::bounded_map;
use crate::providers::ProviderHandle;

/// Issue every query against `search` with at most `max_in_flight` calls in
/// flight. A failed query contributes nothing; the batch only fails when
/// every query failed. Results keep query order, then provider rank.
pub fn retrieve_all(
    queries: &[String],
    search: &ProviderHandle,
    limit: usize,
    max_in_flight: usize,
) -> Result<Vec<RetrievedDoc>, ExplorationError> {
    if queries.is_empty() {
        return Err(ExplorationError::NoQueries);
    }
    let per_query = bounded_map(queries, max_in_flight, |_, q| search.search(q, limit));
    let mut failures = Vec::new();
    let mut docs = Vec::new();
    for (q, res) in queries.iter().zip(per_query) {
        match res {
            Ok(results) => docs.extend(results.into_iter().map(|r| {
                let mut d = RetrievedDoc::new(r.url, r.snippet_or_body, q.clone());
                d.title = r.title;
                d
            })),
            Err(e) => {
                log::warn!("search for `{q}` failed: {e}");
                failures.push(format!("{q}: {e}"));
            }
        }
    }
    if failures.len() == queries.len() {
        return Err(ExplorationError::AllQueriesFailed { failures });
    }
    Ok(docs)
}
