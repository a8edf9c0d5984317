use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::text::casefold;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub case_id: String,
    pub ranked_candidates: Vec<String>,
    pub truth: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanRank {
    pub mean: f64,
    pub hits: usize,
    /// Cases whose truth never appeared; left out of the mean.
    pub excluded: usize,
}

/// Case-folded with whitespace runs collapsed.
pub fn normalize_label(s: &str) -> String {
    casefold(s).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1-based rank of the truth, if present.
pub fn rank_of_truth(r: &DiagnosisResult) -> Option<usize> {
    let truth = normalize_label(&r.truth);
    r.ranked_candidates
        .iter()
        .position(|c| normalize_label(c) == truth)
        .map(|i| i + 1)
}

/// Fraction of cases with the truth in the top `k`; 0 for no cases.
pub fn recall_at_k(results: &[DiagnosisResult], k: usize) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let hits = results
        .iter()
        .filter(|r| rank_of_truth(r).is_some_and(|rank| rank <= k))
        .count();
    hits as f64 / results.len() as f64
}

pub fn mean_rank(results: &[DiagnosisResult]) -> Result<MeanRank, MetricsError> {
    let ranks: Vec<usize> = results.iter().filter_map(rank_of_truth).collect();
    if ranks.is_empty() {
        return Err(MetricsError::NoHits { cases: results.len() });
    }
    Ok(MeanRank {
        mean: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
        hits: ranks.len(),
        excluded: results.len() - ranks.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(rank: Option<usize>, len: usize) -> DiagnosisResult {
        let mut ranked: Vec<String> = (0..len).map(|i| format!("other {i}")).collect();
        if let Some(r) = rank {
            ranked[r - 1] = "Glutaric  Acidemia type I".into();
        }
        DiagnosisResult {
            case_id: "c".into(),
            ranked_candidates: ranked,
            truth: "glutaric acidemia Type I".into(),
        }
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&[case(Some(1), 5), case(Some(1), 2)], 1), 1.0);
        assert_eq!(recall_at_k(&[case(Some(3), 12), case(Some(12), 12)], 10), 0.5);
        assert_eq!(recall_at_k(&[case(None, 0)], 10), 0.0);
        assert_eq!(recall_at_k(&[], 10), 0.0);
    }

    #[test]
    fn mean_rank_examples() {
        let m = mean_rank(&[case(Some(1), 3), case(Some(2), 3), case(Some(3), 3)]).unwrap();
        assert_eq!((m.mean, m.hits, m.excluded), (2.0, 3, 0));
        let m = mean_rank(&[case(Some(1), 3), case(None, 3), case(Some(3), 3)]).unwrap();
        assert_eq!((m.mean, m.excluded), (2.0, 1));
        assert!(matches!(
            mean_rank(&[case(None, 3)]),
            Err(MetricsError::NoHits { cases: 1 })
        ));
    }
}
