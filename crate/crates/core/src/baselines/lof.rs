use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{euclidean, Matrix};

/// Reachability means below this are treated as this value.
pub const DENSITY_FLOOR: f64 = 1e-12;
pub const DEFAULT_NEIGHBORS: usize = 20;

/// The `k` nearest training rows to `q` as (distance, index), ascending,
/// ties broken by index. `skip` excludes one training row (the query
/// itself when scoring the training set).
fn knn(train: &Matrix, q: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (j, row) in train.iter_rows().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d = euclidean(q, row);
        if best.len() == k && (d, j) >= best[k - 1] {
            continue;
        }
        let at = best.partition_point(|e| *e < (d, j));
        best.insert(at, (d, j));
        best.truncate(k);
    }
    best
}

fn lrd(neighbors: &[(f64, usize)], k_distance: &[f64]) -> f64 {
    let reach: f64 = neighbors.iter().map(|&(d, o)| d.max(k_distance[o])).sum::<f64>() / neighbors.len() as f64;
    1.0 / reach.max(DENSITY_FLOOR)
}

/// Local outlier factor of each test row relative to the training rows
/// (novelty mode). Higher means more anomalous; about 1 inside uniform
/// regions.
pub fn score_lof(train: &Matrix, test: &Matrix, n_neighbors: usize) -> Result<Vec<f64>> {
    if n_neighbors == 0 {
        return Err(Error::Config("n_neighbors must be at least 1".into()));
    }
    if train.rows() <= n_neighbors {
        return Err(Error::Data(format!(
            "LOF needs more than {n_neighbors} training rows, got {}",
            train.rows()
        )));
    }
    if train.cols() != test.cols() {
        return Err(Error::DimensionMismatch { expected: train.cols(), actual: test.cols() });
    }
    let train_nn: Vec<Vec<(f64, usize)>> = (0..train.rows())
        .into_par_iter()
        .map(|i| knn(train, train.row(i), n_neighbors, Some(i)))
        .collect();
    let k_distance: Vec<f64> = train_nn.iter().map(|nn| nn[n_neighbors - 1].0).collect();
    let train_lrd: Vec<f64> = train_nn.iter().map(|nn| lrd(nn, &k_distance)).collect();
    Ok((0..test.rows())
        .into_par_iter()
        .map(|i| {
            let nn = knn(train, test.row(i), n_neighbors, None);
            let own = lrd(&nn, &k_distance);
            let neighbor_mean = nn.iter().map(|&(_, o)| train_lrd[o]).sum::<f64>() / nn.len() as f64;
            neighbor_mean / own
        })
        .collect())
}
