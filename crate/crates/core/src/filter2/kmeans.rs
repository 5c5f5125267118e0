//! Lloyd's k-means with k-means++ seeding and seeded restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_euclidean, Matrix};
use crate::stats::derive_seed;

pub const RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 300;
/// Convergence bound on the largest centroid move.
pub const SHIFT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning run.
    pub inertia_trace: Vec<f64>,
}

/// Index and squared distance of the nearest centroid; ties go to the
/// lower index.
pub fn nearest_centroid(centroids: &Matrix, row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter_rows().enumerate() {
        let d = squared_euclidean(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(x: &Matrix, centroids: &Matrix, assignments: &mut [usize], dist: &mut [f64]) -> f64 {
    assignments
        .par_iter_mut()
        .zip(dist.par_iter_mut())
        .enumerate()
        .for_each(|(i, (a, d))| {
            let (c, sq) = nearest_centroid(centroids, x.row(i));
            *a = c;
            *d = sq;
        });
    dist.iter().sum()
}

fn plus_plus_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = x.iter_rows().map(|r| squared_euclidean(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_euclidean(x.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn lloyd(x: &Matrix, k: usize, seed: u64) -> KMeansFit {
    let (n, d) = (x.rows(), x.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(x, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        trace.push(assign(x, &centroids, &mut assignments, &mut dist));

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        // Empty clusters take the points farthest from their centroids.
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = counts[c] as f64;
                sums.row_mut(c).iter_mut().for_each(|s| *s /= cnt);
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                sums.row_mut(c).copy_from_slice(x.row(far));
            }
        }
        let shift = centroids
            .iter_rows()
            .zip(sums.iter_rows())
            .map(|(a, b)| squared_euclidean(a, b))
            .fold(0.0f64, f64::max)
            .sqrt();
        centroids = sums;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    let inertia = assign(x, &centroids, &mut assignments, &mut dist);
    trace.push(inertia);
    KMeansFit { centroids, assignments, inertia, iterations, inertia_trace: trace }
}

/// Best of [`RESTARTS`] seeded runs by inertia; ties go to the earlier run.
pub fn kmeans_fit(x: &Matrix, k: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if x.rows() < k {
        return Err(Error::Data(format!("k-means needs at least k={k} rows, got {}", x.rows())));
    }
    let runs: Vec<KMeansFit> = (0..RESTARTS as u64)
        .into_par_iter()
        .map(|r| lloyd(x, k, derive_seed(seed, r)))
        .collect();
    let mut best = None::<KMeansFit>;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[(f64, f64)], per: usize, sd: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut rows = Vec::new();
        for &(cx, cy) in centers {
            for _ in 0..per {
                rows.push(vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    fn sorted_centroids(m: &Matrix) -> Vec<Vec<f64>> {
        let mut v: Vec<Vec<f64>> = m.iter_rows().map(|r| r.to_vec()).collect();
        v.sort_by(|a, b| a[0].total_cmp(&b[0]));
        v
    }

    #[test]
    fn two_clouds_recover_means() {
        let x = blobs(&[(0.0, 0.0), (10.0, 10.0)], 100, 0.5, 1);
        let fit = kmeans_fit(&x, 2, 7).unwrap();
        let c = sorted_centroids(&fit.centroids);
        for (centroid, lo) in c.iter().zip([0usize, 100]) {
            let mean: Vec<f64> = (0..2)
                .map(|j| (lo..lo + 100).map(|i| x.get(i, j)).sum::<f64>() / 100.0)
                .collect();
            assert!(squared_euclidean(centroid, &mean).sqrt() < 0.5);
        }
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let x = blobs(&[(0.0, 0.0)], 12, 1.0, 2);
        assert_eq!(kmeans_fit(&x, 12, 3).unwrap().inertia, 0.0);
    }

    #[test]
    fn duplication_keeps_centroids() {
        let x = blobs(&[(0.0, 0.0), (8.0, -3.0)], 40, 0.7, 4);
        let doubled = x.vstack(&x).unwrap();
        let a = sorted_centroids(&kmeans_fit(&x, 2, 5).unwrap().centroids);
        let b = sorted_centroids(&kmeans_fit(&doubled, 2, 5).unwrap().centroids);
        for (p, q) in a.iter().zip(&b) {
            assert!(squared_euclidean(p, q).sqrt() < 1e-9);
        }
    }

    #[test]
    fn assignments_are_nearest_and_inertia_monotone() {
        let x = blobs(&[(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)], 50, 1.2, 6);
        let fit = kmeans_fit(&x, 4, 8).unwrap();
        for (i, &a) in fit.assignments.iter().enumerate() {
            assert_eq!(nearest_centroid(&fit.centroids, x.row(i)).0, a);
        }
        for w in fit.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn too_few_rows() {
        let x = blobs(&[(0.0, 0.0)], 3, 1.0, 9);
        assert!(kmeans_fit(&x, 4, 1).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let x = blobs(&[(0.0, 0.0), (2.0, 2.0)], 60, 1.0, 10);
        assert_eq!(kmeans_fit(&x, 3, 11).unwrap(), kmeans_fit(&x, 3, 11).unwrap());
    }
}
