use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Condition, Direction};

/// Contributions closer than this (as a fraction) to the maximum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub scope: String,
    pub direction: Direction,
    pub condition: Condition,
    pub n_rows: usize,
    pub feature_names: Vec<String>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `loadings[c]` is the unit loading vector of component c. Each vector's
    /// largest-magnitude entry is positive.
    pub loadings: Vec<Vec<f64>>,
    /// Percent per component; sums to 100.
    pub variance_explained: Vec<f64>,
    /// Percent contribution of each feature to PC1 and PC2.
    pub contributions: [Vec<f64>; 2],
    /// Index into `feature_names` of the top feature of PC1 and PC2.
    pub top: [usize; 2],
}

impl PcaReport {
    pub fn top_feature(&self, pc: usize) -> &str {
        &self.feature_names[self.top[pc]]
    }

    pub fn pc12_variance(&self) -> f64 {
        self.variance_explained.iter().take(2).sum()
    }
}

/// Sample covariance of the columns of `x` (rows are observations).
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let means = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    centered.transpose() * &centered / (n as f64 - 1.0)
}

/// 100 · loading² / Σ loading² for one component.
pub fn contributions(loading: &[f64]) -> Vec<f64> {
    let total: f64 = loading.iter().map(|v| v * v).sum();
    loading.iter().map(|v| 100.0 * v * v / total).collect()
}

/// Argmax with ties (within [`TIE_TOLERANCE`] of 100%) broken toward the lowest index.
pub fn top_index(contrib: &[f64]) -> usize {
    let max = contrib.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    contrib
        .iter()
        .position(|c| *c >= max - 100.0 * TIE_TOLERANCE)
        .unwrap_or(0)
}

/// PCA of already-standardized rows via the eigendecomposition of their sample
/// covariance.
pub fn pca(
    rows: &[Vec<f64>],
    feature_names: &[String],
    scope: &str,
    direction: Direction,
    condition: Condition,
) -> Result<PcaReport> {
    if rows.len() < 3 {
        return Err(Error::TooFewRows {
            needed: 3,
            got: rows.len(),
        });
    }
    let p = feature_names.len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let cov = covariance(&x);
    let trace = cov.trace();
    if !(trace > 1e-12) {
        return Err(Error::DegenerateCovariance);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let loadings: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, 0.0f64),
                    |best, (i, x)| if x.abs() > best.1.abs() + 1e-12 { (i, x) } else { best },
                )
                .0;
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let clipped: Vec<f64> = eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let variance_explained = clipped.iter().map(|v| 100.0 * v / total).collect();
    let c1 = contributions(&loadings[0]);
    let c2 = if p > 1 {
        contributions(&loadings[1])
    } else {
        vec![0.0; p]
    };
    let top = [top_index(&c1), top_index(&c2)];
    Ok(PcaReport {
        scope: scope.to_string(),
        direction,
        condition,
        n_rows: rows.len(),
        feature_names: feature_names.to_vec(),
        eigenvalues,
        loadings,
        variance_explained,
        contributions: [c1, c2],
        top,
    })
}
