use serde::{Deserialize, Serialize};

use super::{InterAggregation, MetricsError, SampleSet};
use crate::providers::{EmbeddingVector, ProviderHandle};

/// Histogram bin edges over cosine similarity.
pub const BIN_EDGES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<String>,
    pub counts: [u64; 5],
    /// Pairs with negative cosine, counted in the lowest bin.
    pub clamped_negative: u64,
}

impl Histogram {
    fn new() -> Self {
        Self {
            edges: BIN_EDGES.iter().map(|e| format!("{e:.1}")).collect(),
            counts: [0; 5],
            clamped_negative: 0,
        }
    }

    fn add(&mut self, v: f64) {
        if v < 0.0 {
            self.clamped_negative += 1;
        }
        let bin = ((v.max(0.0) / 0.2).floor() as usize).min(4);
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Cosine of two raw vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MetricsError> {
    cosine(&a.values, &b.values)
}

/// Pairwise matrix and histogram of the `C(n, 2)` off-diagonal pairs.
pub fn intra_from_vectors(
    labels: Vec<String>,
    vectors: &[Vec<f64>],
) -> Result<(SimilarityMatrix, Histogram), MetricsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    let mut values = vec![vec![0.0; n]; n];
    let mut hist = Histogram::new();
    for i in 0..n {
        values[i][i] = 1.0;
        for j in i + 1..n {
            let c = cosine(&vectors[i], &vectors[j])?;
            values[i][j] = c;
            values[j][i] = c;
            hist.add(c);
        }
    }
    Ok((SimilarityMatrix { labels, values }, hist))
}

pub fn intra_similarity(
    set: &SampleSet,
    embed: &ProviderHandle,
) -> Result<(SimilarityMatrix, Histogram), MetricsError> {
    if set.texts.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            needed: 2,
            got: set.texts.len(),
        });
    }
    let vectors = set.vectors(embed)?;
    let labels = (0..vectors.len())
        .map(|i| format!("{}#{i}", set.model_id))
        .collect();
    intra_from_vectors(labels, &vectors)
}

fn mean_within(v: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if v.len() == 1 {
        return cosine(&v[0], &v[0]);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            sum += cosine(&v[i], &v[j])?;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

fn centroid(v: &[Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; v[0].len()];
    for x in v {
        for (a, b) in c.iter_mut().zip(x) {
            *a += b;
        }
    }
    c.iter().map(|a| a / v.len() as f64).collect()
}

/// Model-by-model similarity. Off-diagonal entries aggregate cross pairs;
/// the diagonal is each set's mean within-set similarity (1 for a
/// singleton), not a forced 1.
pub fn inter_from_vectors(
    labels: Vec<String>,
    sets: &[Vec<Vec<f64>>],
    aggregation: InterAggregation,
) -> Result<SimilarityMatrix, MetricsError> {
    let m = sets.len();
    if m < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: m });
    }
    if let Some(i) = sets.iter().position(|s| s.is_empty()) {
        return Err(MetricsError::InvalidArgument(format!("sample set {i} is empty")));
    }
    let mut values = vec![vec![0.0; m]; m];
    for a in 0..m {
        values[a][a] = mean_within(&sets[a])?;
        for b in a + 1..m {
            let v = match aggregation {
                InterAggregation::MeanOfPairs => {
                    let mut sum = 0.0;
                    for x in &sets[a] {
                        for y in &sets[b] {
                            sum += cosine(x, y)?;
                        }
                    }
                    sum / (sets[a].len() * sets[b].len()) as f64
                }
                InterAggregation::Centroid => cosine(&centroid(&sets[a]), &centroid(&sets[b]))?,
            };
            values[a][b] = v;
            values[b][a] = v;
        }
    }
    Ok(SimilarityMatrix { labels, values })
}

pub fn inter_similarity(
    sets: &[SampleSet],
    embed: &ProviderHandle,
    aggregation: InterAggregation,
) -> Result<SimilarityMatrix, MetricsError> {
    if let Some(first) = sets.first() {
        if let Some(other) = sets.iter().find(|s| s.prompt_id != first.prompt_id) {
            return Err(MetricsError::PromptMismatch {
                expected: first.prompt_id.clone(),
                got: other.prompt_id.clone(),
            });
        }
    }
    let vectors = sets
        .iter()
        .map(|s| s.vectors(embed))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = sets.iter().map(|s| s.model_id.clone()).collect();
    inter_from_vectors(labels, &vectors, aggregation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{make_mock_suite, MockFixture};

    #[test]
    fn hand_values() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(MetricsError::ZeroVector)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(MetricsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identical_texts_fill_top_bin() {
        let s = make_mock_suite(0, &MockFixture::default());
        let set = SampleSet {
            model_id: "m".into(),
            prompt_id: "p".into(),
            texts: vec!["same words".into(); 3],
            embeddings: None,
        };
        let (m, h) = intra_similarity(&set, &s.embed).unwrap();
        assert_eq!(h.counts, [0, 0, 0, 0, 3]);
        assert_eq!(m.values.len(), 3);
    }

    #[test]
    fn histogram_totals_and_clamping() {
        let v = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let (m, h) = intra_from_vectors(vec!["a".into(), "b".into()], &v).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.clamped_negative, 1);
        assert_eq!(h.counts[0], 1);
        assert_eq!(m.values[0][1], -1.0);
        assert!(matches!(
            intra_from_vectors(vec!["a".into()], &v[..1]),
            Err(MetricsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn inter_brute_force() {
        let a = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let b = vec![vec![0.0, 1.0], vec![2.0, 1.0]];
        let m = inter_from_vectors(
            vec!["A".into(), "B".into()],
            &[a.clone(), b.clone()],
            InterAggregation::MeanOfPairs,
        )
        .unwrap();
        let mut sum = 0.0;
        for x in &a {
            for y in &b {
                let dot = x[0] * y[0] + x[1] * y[1];
                sum += dot / ((x[0] * x[0] + x[1] * x[1]).sqrt() * (y[0] * y[0] + y[1] * y[1]).sqrt());
            }
        }
        assert!((m.values[0][1] - sum / 4.0).abs() < 1e-12);
        assert!((m.values[0][0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        let orth = inter_from_vectors(
            vec!["A".into(), "B".into()],
            &[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            InterAggregation::Centroid,
        )
        .unwrap();
        assert_eq!(orth.values, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn same_single_text_gives_ones() {
        let s = make_mock_suite(0, &MockFixture::default());
        let set = |m: &str| SampleSet {
            model_id: m.into(),
            prompt_id: "p".into(),
            texts: vec!["one answer".into()],
            embeddings: None,
        };
        let m = inter_similarity(&[set("a"), set("b")], &s.embed, InterAggregation::MeanOfPairs).unwrap();
        for row in &m.values {
            for v in row {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        let mut other = set("c");
        other.prompt_id = "q".into();
        assert!(matches!(
            inter_similarity(&[set("a"), other], &s.embed, InterAggregation::MeanOfPairs),
            Err(MetricsError::PromptMismatch { .. })
        ));
    }
}
