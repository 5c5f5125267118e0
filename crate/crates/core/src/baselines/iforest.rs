use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats::derive_seed;

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;
const EULER_GAMMA: f64 = 0.5772156649;

/// Average unsuccessful-search path length in a binary search tree of `n`
/// nodes.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { size: usize },
    Split { feature: usize, cut: f64, left: Box<Node>, right: Box<Node> },
}

fn build(x: &Matrix, idx: &mut [usize], depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> Node {
    if depth >= limit || idx.len() <= 1 {
        return Node::Leaf { size: idx.len() };
    }
    let ranges: Vec<(usize, f64, f64)> = (0..x.cols())
        .filter_map(|j| {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(x.get(i, j)), hi.max(x.get(i, j)))
            });
            (hi > lo).then_some((j, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return Node::Leaf { size: idx.len() };
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let cut = rng.random_range(lo..hi);
    let mut split = 0;
    for k in 0..idx.len() {
        if x.get(idx[k], feature) < cut {
            idx.swap(k, split);
            split += 1;
        }
    }
    let (l, r) = idx.split_at_mut(split);
    Node::Split {
        feature,
        cut,
        left: Box::new(build(x, l, depth + 1, limit, rng)),
        right: Box::new(build(x, r, depth + 1, limit, rng)),
    }
}

fn path_length(node: &Node, row: &[f64], depth: usize) -> f64 {
    match node {
        Node::Leaf { size } => depth as f64 + average_path_length(*size),
        Node::Split { feature, cut, left, right } => {
            if row[*feature] < *cut {
                path_length(left, row, depth + 1)
            } else {
                path_length(right, row, depth + 1)
            }
        }
    }
}

/// Isolation-forest anomaly score `2^(-E[h(x)] / c(s))` of each test row.
pub fn score_if(train: &Matrix, test: &Matrix, n_trees: usize, subsample: usize, seed: u64) -> Result<Vec<f64>> {
    if n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::Data("isolation forest needs training rows".into()));
    }
    if train.cols() != test.cols() {
        return Err(Error::DimensionMismatch { expected: train.cols(), actual: test.cols() });
    }
    let s = subsample.clamp(1, train.rows());
    let limit = (s as f64).log2().ceil().max(0.0) as usize;
    let trees: Vec<Node> = (0..n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t));
            let mut idx = rand::seq::index::sample(&mut rng, train.rows(), s).into_vec();
            build(train, &mut idx, 0, limit, &mut rng)
        })
        .collect();
    let c = average_path_length(s).max(f64::MIN_POSITIVE);
    Ok((0..test.rows())
        .into_par_iter()
        .map(|i| {
            let mean = trees.iter().map(|t| path_length(t, test.row(i), 0)).sum::<f64>() / n_trees as f64;
            2f64.powf(-mean / c)
        })
        .collect())
}
