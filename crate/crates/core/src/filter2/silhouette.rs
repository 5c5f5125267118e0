use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{euclidean, Matrix};

fn point_silhouette(x: &Matrix, labels: &[usize], counts: &[usize], i: usize) -> f64 {
    let own = labels[i];
    if counts[own] <= 1 {
        return 0.0;
    }
    let mut sums = vec![0.0; counts.len()];
    let xi = x.row(i);
    for (j, &l) in labels.iter().enumerate() {
        if j != i {
            sums[l] += euclidean(xi, x.row(j));
        }
    }
    let a = sums[own] / (counts[own] - 1) as f64;
    let b = (0..counts.len())
        .filter(|&c| c != own && counts[c] > 0)
        .map(|c| sums[c] / counts[c] as f64)
        .fold(f64::INFINITY, f64::min);
    let denom = a.max(b);
    if denom > 0.0 {
        (b - a) / denom
    } else {
        0.0
    }
}

/// Mean silhouette over all rows. Singleton clusters contribute 0.
pub fn silhouette_mean(x: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch { expected: x.rows(), actual: labels.len() });
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Degenerate("silhouette needs at least two non-empty clusters".into()));
    }
    let s: Vec<f64> = (0..x.rows())
        .into_par_iter()
        .map(|i| point_silhouette(x, labels, &counts, i))
        .collect();
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Silhouette on a seeded subsample of at most `sample_size` rows; exact
/// when the matrix is no larger than that.
pub fn silhouette_sampled(x: &Matrix, labels: &[usize], sample_size: usize, seed: u64) -> Result<f64> {
    if sample_size == 0 || x.rows() <= sample_size {
        return silhouette_mean(x, labels);
    }
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch { expected: x.rows(), actual: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, x.rows(), sample_size).into_vec();
    idx.sort_unstable();
    let sub_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    silhouette_mean(&x.select_rows(&idx), &sub_labels)
}
