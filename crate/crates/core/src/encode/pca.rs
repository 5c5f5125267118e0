use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Cumulative explained-variance target for the retained prefix.
pub const VARIANCE_TARGET: f64 = 0.95;

const EIGEN_FLOOR: f64 = 1e-15;

/// Principal axes of a sample, ordered by descending variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// All `d` unit eigenvectors, one per row.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Smallest prefix whose ratios sum to at least [`VARIANCE_TARGET`];
    /// one when the sample has no variance at all.
    pub retained: usize,
}

/// Eigendecomposition of the sample covariance (`n - 1` denominator).
pub fn fit_pca(x: &Matrix) -> Result<PcaBasis> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 || d == 0 {
        return Err(Error::Data(format!("PCA needs at least 2 rows and 1 column, got {n}×{d}")));
    }
    let mut mean = vec![0.0; d];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in x.iter_rows() {
        for j in 0..d {
            centered[j] = r[j] - mean[j];
        }
        for a in 0..d {
            let ca = centered[a];
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(d);
    let mut eigenvalues = Vec::with_capacity(d);
    for &i in &order {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        // Sign convention: largest-magnitude entry positive.
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        // Rounding noise from centering a constant column is not variance.
        let e = eig.eigenvalues[i];
        eigenvalues.push(if e < EIGEN_FLOOR { 0.0 } else { e });
    }

    let total: f64 = eigenvalues.iter().sum();
    let explained_variance_ratio: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|e| e / total).collect()
    } else {
        vec![0.0; d]
    };
    let mut retained = 1;
    if total > 0.0 {
        let mut acc = 0.0;
        for (i, r) in explained_variance_ratio.iter().enumerate() {
            acc += r;
            if acc >= VARIANCE_TARGET - 1e-12 {
                retained = i + 1;
                break;
            }
        }
    }
    Ok(PcaBasis { mean, components, eigenvalues, explained_variance_ratio, retained })
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scores on the first `k` components.
    pub fn project_k(&self, x: &Matrix, k: usize) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.cols() });
        }
        let k = k.min(self.components.len());
        let mut out = Matrix::zeros(x.rows(), k);
        for (i, r) in x.iter_rows().enumerate() {
            let o = out.row_mut(i);
            for (c, comp) in self.components[..k].iter().enumerate() {
                o[c] = comp.iter().zip(r).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum();
            }
        }
        Ok(out)
    }

    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        self.project_k(x, self.retained)
    }

    /// Maps scores back to centered input coordinates.
    pub fn back_project_centered(&self, scores: &Matrix) -> Matrix {
        let k = scores.cols();
        let d = self.dim();
        let mut out = Matrix::zeros(scores.rows(), d);
        for (i, s) in scores.iter_rows().enumerate() {
            let o = out.row_mut(i);
            for (c, comp) in self.components[..k].iter().enumerate() {
                for j in 0..d {
                    o[j] += s[c] * comp[j];
                }
            }
        }
        out
    }
}
