use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// Unit principal axes, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Sum of the per-coordinate sample variances.
    pub total_variance: f64,
    pub mean: Vec<f64>,
    /// Centered samples projected onto the components.
    pub coordinates: Vec<Vec<f64>>,
}

/// Eigendecomposition of the sample covariance (divisor `n - 1`). Each axis
/// is signed so its largest-magnitude coordinate is positive; the first such
/// coordinate wins a tie.
pub fn pca_project(vectors: &[Vec<f64>], d: usize) -> Result<PcaProjection, MetricsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(MetricsError::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if d == 0 || d > dim {
        return Err(MetricsError::InvalidArgument(format!(
            "cannot keep {d} components of {dim}-dimensional data"
        )));
    }
    if vectors.iter().all(|v| v == &vectors[0]) {
        return Err(MetricsError::DegenerateData);
    }

    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Vec::with_capacity(d);
    let mut explained_variance = Vec::with_capacity(d);
    for &k in order.iter().take(d) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = axis.iter().enumerate().fold(
            0,
            |best, (i, v)| if v.abs() > axis[best].abs() { i } else { best },
        );
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(axis);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    let coordinates = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().enumerate().map(|(j, v)| v * centered[(i, j)]).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        components,
        explained_variance,
        total_variance,
        mean,
        coordinates,
    })
}
