use std::collections::{HashMap, HashSet};

use petgraph::unionfind::UnionFind;

use super::similarity::cosine;
use super::MetricsError;
use crate::providers::ProviderHandle;

/// Number of classes under the transitive closure of `equivalent`.
pub fn distinct_k<S: AsRef<str>>(texts: &[S], equivalent: impl Fn(&str, &str) -> bool) -> usize {
    let k = texts.len();
    let mut uf = UnionFind::<usize>::new(k);
    for i in 0..k {
        for j in i + 1..k {
            if uf.find(i) != uf.find(j) && equivalent(texts[i].as_ref(), texts[j].as_ref()) {
                uf.union(i, j);
            }
        }
    }
    uf.into_labeling().into_iter().collect::<HashSet<_>>().len()
}

/// Equivalence by embedding cosine. Negative cosines count as zero, so a
/// threshold of 0 makes every pair equivalent.
#[derive(Debug, Clone)]
pub struct EmbeddingEquivalence {
    threshold: f64,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingEquivalence {
    /// Oracle over precomputed vectors keyed by text.
    pub fn from_vectors(
        threshold: f64,
        vectors: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, MetricsError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(MetricsError::InvalidArgument(format!(
                "threshold {threshold} outside [0, 1]"
            )));
        }
        Ok(Self {
            threshold,
            vectors: vectors.into_iter().collect(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Texts not embedded up front are only equivalent to themselves.
    pub fn equivalent(&self, a: &str, b: &str) -> bool {
        if a == b {
            return true;
        }
        match (self.vectors.get(a), self.vectors.get(b)) {
            (Some(x), Some(y)) => cosine(x, y)
                .map(|c| c.max(0.0) >= self.threshold)
                .unwrap_or(false),
            _ => false,
        }
    }
}

/// Embed `texts` once and return the thresholded oracle over them.
pub fn embedding_equivalence(
    threshold: f64,
    embed: &ProviderHandle,
    texts: &[String],
) -> Result<EmbeddingEquivalence, MetricsError> {
    let mut unique: Vec<String> = Vec::new();
    for t in texts {
        if !unique.contains(t) {
            unique.push(t.clone());
        }
    }
    let vectors = if unique.is_empty() {
        Vec::new()
    } else {
        embed.embed(&unique)?.into_iter().map(|v| v.values).collect()
    };
    EmbeddingEquivalence::from_vectors(threshold, unique.into_iter().zip(vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{make_mock_suite, MockFixture};

    #[test]
    fn small_cases() {
        let eq = |a: &str, b: &str| a == b;
        assert_eq!(distinct_k(&["x", "x", "x"], eq), 1);
        assert_eq!(distinct_k(&["x", "y", "z"], eq), 3);
        let ab = |a: &str, b: &str| matches!((a, b), ("A", "B") | ("B", "A"));
        assert_eq!(distinct_k(&["A", "B", "C"], ab), 2);
        let chain = |a: &str, b: &str| {
            let (x, y) = (a.as_bytes()[0], b.as_bytes()[0]);
            x.abs_diff(y) == 1
        };
        assert_eq!(distinct_k(&["a", "c", "b", "e"], chain), 2);
    }

    #[test]
    fn embedding_oracle_boundaries() {
        let s = make_mock_suite(0, &MockFixture::default());
        let texts: Vec<String> = ["alpha beta", "gamma delta", "epsilon zeta", "alpha beta"]
            .iter()
            .map(|t| t.to_string())
            .collect();
        let zero = embedding_equivalence(0.0, &s.embed, &texts).unwrap();
        assert_eq!(distinct_k(&texts, |a, b| zero.equivalent(a, b)), 1);
        let strict = embedding_equivalence(1.0, &s.embed, &texts).unwrap();
        assert!(strict.equivalent("alpha beta", "alpha beta"));
        assert_eq!(distinct_k(&texts, |a, b| strict.equivalent(a, b)), 3);
        assert!(embedding_equivalence(1.5, &s.embed, &texts).is_err());
    }
}
