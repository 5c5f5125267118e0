//! Known-behavior filter: k-means over the infrequent training flows, with
//! a distance threshold per cluster or one global tanh threshold.

mod kmeans;
mod silhouette;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DistanceMode, PipelineConfig};
use crate::encode::FeatureSpace;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::ClusterVerdict;
use crate::stats::{derive_seed, percentile};

pub use kmeans::{kmeans_fit, nearest_centroid, KMeansFit, MAX_ITERATIONS, RESTARTS, SHIFT_TOLERANCE};
pub use silhouette::{silhouette_mean, silhouette_sampled};

pub const FILTER2_SCHEMA_VERSION: u32 = 1;

/// How an infrequent flow is declared known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    /// Known iff distance < the assigned cluster's calibrated threshold.
    PerCluster,
    /// Known iff tanh(distance) < τ.
    GlobalTanh(f64),
}

impl ThresholdMode {
    pub fn from_config(config: &PipelineConfig) -> Self {
        config.global_tanh_threshold.map_or(ThresholdMode::PerCluster, ThresholdMode::GlobalTanh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub silhouette: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter2Model {
    pub schema_version: u32,
    pub k_star: usize,
    /// Number of rows the clustering was fitted on.
    pub training_rows: usize,
    pub centroids: Matrix,
    /// `None` until calibrated on validation data.
    pub per_cluster_thresholds: Option<Vec<f64>>,
    pub pctl_known: Option<f64>,
    pub distance_mode: DistanceMode,
    /// Member means and standard deviations per cluster, kept only for the
    /// normalized distance. Zero deviations are already replaced.
    pub per_cluster_mean: Option<Matrix>,
    pub per_cluster_std: Option<Matrix>,
    /// Number of zero deviations replaced by a positive fallback.
    pub std_replacements: usize,
    pub feature_space: FeatureSpace,
    pub k_scores: Vec<KScore>,
    pub warnings: Vec<String>,
    pub seed: u64,
}

fn distinct_rows(x: &Matrix) -> usize {
    let mut rows: Vec<&[f64]> = x.iter_rows().collect();
    let cmp = |a: &&[f64], b: &&[f64]| {
        a.iter().zip(b.iter()).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    };
    rows.sort_by(cmp);
    rows.dedup_by(|a, b| cmp(&&**a, &&**b).is_eq());
    rows.len()
}

/// Population standard deviation of each cluster's members, with zeros
/// replaced by the cluster's smallest positive deviation, else the
/// global smallest positive one, else 1.
fn cluster_moments(x: &Matrix, fit: &KMeansFit) -> (Matrix, Matrix, usize) {
    let (k, d) = (fit.centroids.rows(), x.cols());
    let mut mean = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &a) in fit.assignments.iter().enumerate() {
        counts[a] += 1;
        for (m, v) in mean.row_mut(a).iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for c in 0..k {
        let n = counts[c].max(1) as f64;
        mean.row_mut(c).iter_mut().for_each(|m| *m /= n);
    }
    let mut std = Matrix::zeros(k, d);
    for (i, &a) in fit.assignments.iter().enumerate() {
        for j in 0..d {
            let dv = x.get(i, j) - mean.get(a, j);
            std.row_mut(a)[j] += dv * dv;
        }
    }
    for c in 0..k {
        let n = counts[c].max(1) as f64;
        std.row_mut(c).iter_mut().for_each(|s| *s = (*s / n).sqrt());
    }
    let positive_min = |vals: &[f64]| vals.iter().copied().filter(|&v| v > 0.0).fold(None, |m: Option<f64>, v| {
        Some(m.map_or(v, |m| m.min(v)))
    });
    let global = positive_min(std.as_slice()).unwrap_or(1.0);
    let mut replaced = 0;
    for c in 0..k {
        let fallback = positive_min(std.row(c)).unwrap_or(global);
        for s in std.row_mut(c) {
            if *s <= 0.0 {
                *s = fallback;
                replaced += 1;
            }
        }
    }
    (mean, std, replaced)
}

/// Selects k* by mean silhouette over `[k_min, k_max]` (ties to the
/// smaller k) and keeps the k-means fit at k*.
pub fn train_filter2(x: &Matrix, feature_space: FeatureSpace, config: &PipelineConfig) -> Result<Filter2Model> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Degenerate(format!("clustering needs at least 2 infrequent rows, got {n}")));
    }
    if !x.all_finite() {
        return Err(Error::Data("clustering input contains non-finite values".into()));
    }
    let distinct = distinct_rows(x);
    if distinct < 2 {
        return Err(Error::Degenerate("all infrequent training rows are identical; silhouette is undefined".into()));
    }
    let mut warnings = Vec::new();
    let mut k_max = config.k_max;
    if k_max > distinct {
        let msg = format!("k_max {} shrunk to {} ({} rows, {} distinct)", config.k_max, distinct, n, distinct);
        warn!("{msg}");
        warnings.push(msg);
        k_max = distinct;
    }
    let k_min = config.k_min.min(k_max);
    if k_min != config.k_min {
        warnings.push(format!("k_min {} shrunk to {}", config.k_min, k_min));
    }

    let fits: Vec<(KMeansFit, f64)> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let fit = kmeans_fit(x, k, derive_seed(config.rng_seed, k as u64))?;
            let s = silhouette_sampled(
                x,
                &fit.assignments,
                config.silhouette_sample_size,
                derive_seed(config.rng_seed, 1000 + k as u64),
            )?;
            Ok((fit, s))
        })
        .collect::<Result<_>>()?;

    let k_scores: Vec<KScore> = fits
        .iter()
        .map(|(f, s)| KScore { k: f.centroids.rows(), silhouette: *s, inertia: f.inertia })
        .collect();
    let mut best = 0;
    for (i, (_, s)) in fits.iter().enumerate() {
        if *s > fits[best].1 {
            best = i;
        }
    }
    let fit = fits.into_iter().nth(best).expect("non-empty k range").0;
    let k_star = fit.centroids.rows();

    let (per_cluster_mean, per_cluster_std, std_replacements) = match config.distance_mode {
        DistanceMode::NormalizedEuclidean => {
            let (m, s, r) = cluster_moments(x, &fit);
            if r > 0 {
                warnings.push(format!("{r} zero standard deviations replaced"));
            }
            (Some(m), Some(s), r)
        }
        DistanceMode::RawEuclidean => (None, None, 0),
    };

    Ok(Filter2Model {
        schema_version: FILTER2_SCHEMA_VERSION,
        k_star,
        training_rows: n,
        centroids: fit.centroids,
        per_cluster_thresholds: None,
        pctl_known: None,
        distance_mode: config.distance_mode,
        per_cluster_mean,
        per_cluster_std,
        std_replacements,
        feature_space,
        k_scores,
        warnings,
        seed: config.rng_seed,
    })
}

impl Filter2Model {
    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    /// Nearest centroid and the mode-specific distance to it.
    pub fn assign(&self, row: &[f64]) -> (usize, f64) {
        let (c, sq) = nearest_centroid(&self.centroids, row);
        let distance = match (&self.distance_mode, &self.per_cluster_std) {
            (DistanceMode::NormalizedEuclidean, Some(std)) => {
                let centroid = self.centroids.row(c);
                let ss: f64 = row
                    .iter()
                    .zip(centroid)
                    .zip(std.row(c))
                    .map(|((v, m), s)| {
                        let z = (v - m) / s;
                        z * z
                    })
                    .sum();
                (ss / row.len() as f64).sqrt()
            }
            _ => sq.sqrt(),
        };
        (c, distance)
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.cols() });
        }
        Ok(())
    }

    pub fn assign_rows(&self, x: &Matrix) -> Result<Vec<(usize, f64)>> {
        self.check_dim(x)?;
        Ok((0..x.rows()).into_par_iter().map(|i| self.assign(x.row(i))).collect())
    }

    /// Stores the per-cluster thresholds computed from `validation`.
    pub fn calibrate(&mut self, validation: &Matrix, pctl_known: f64) -> Result<()> {
        self.per_cluster_thresholds = Some(set_cluster_thresholds(self, validation, pctl_known)?);
        self.pctl_known = Some(pctl_known);
        Ok(())
    }

    pub fn score_and_classify(&self, row: &[f64], mode: ThresholdMode) -> Result<ClusterVerdict> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: row.len() });
        }
        let (cluster, distance) = self.assign(row);
        let tanh_score = distance.tanh();
        let known = match mode {
            ThresholdMode::GlobalTanh(tau) => tanh_score < tau,
            ThresholdMode::PerCluster => {
                let th = self
                    .per_cluster_thresholds
                    .as_ref()
                    .ok_or_else(|| Error::Config("per-cluster thresholds are not calibrated".into()))?;
                distance < th[cluster]
            }
        };
        Ok(ClusterVerdict { cluster, distance, tanh_score, known })
    }

    pub fn score_rows(&self, x: &Matrix, mode: ThresholdMode) -> Result<Vec<ClusterVerdict>> {
        self.check_dim(x)?;
        (0..x.rows()).into_par_iter().map(|i| self.score_and_classify(x.row(i), mode)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != FILTER2_SCHEMA_VERSION {
            return Err(Error::Schema(format!("unsupported filter2 schema version {}", self.schema_version)));
        }
        if self.centroids.rows() != self.k_star || !self.centroids.all_finite() {
            return Err(Error::Schema("centroids must be k_star finite rows".into()));
        }
        if let Some(th) = &self.per_cluster_thresholds {
            if th.len() != self.k_star || th.iter().any(|t| !(*t >= 0.0)) {
                return Err(Error::Schema("per-cluster thresholds must be k_star non-negative values".into()));
            }
        }
        if self.distance_mode == DistanceMode::NormalizedEuclidean {
            match &self.per_cluster_std {
                Some(s) if s.rows() == self.k_star && s.cols() == self.dim() && s.as_slice().iter().all(|v| *v > 0.0) => {}
                _ => return Err(Error::Schema("normalized distance needs positive per-cluster deviations".into())),
            }
        }
        Ok(())
    }
}

/// Nearest-rank percentile of each cluster's validation distances.
/// Clusters without validation members get threshold 0.
pub fn set_cluster_thresholds(model: &Filter2Model, validation: &Matrix, pctl_known: f64) -> Result<Vec<f64>> {
    if validation.is_empty() {
        return Err(Error::Data("cluster thresholds need a non-empty infrequent validation set".into()));
    }
    let mut per_cluster = vec![Vec::new(); model.k_star];
    for (c, d) in model.assign_rows(validation)? {
        per_cluster[c].push(d);
    }
    Ok(per_cluster.iter().map(|ds| percentile(ds, pctl_known).unwrap_or(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn three_blobs(seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut rows = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (6.0, 0.0), (3.0, 6.0)] {
            for _ in 0..40 {
                rows.push(vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    fn cfg(k_max: usize) -> PipelineConfig {
        PipelineConfig { k_min: 2, k_max, ..Default::default() }
    }

    #[test]
    fn selects_planted_three() {
        let m = train_filter2(&three_blobs(1), FeatureSpace::All, &cfg(10)).unwrap();
        assert_eq!(m.k_star, 3);
        assert_eq!(m.k_scores.len(), 9);
        m.validate().unwrap();
    }

    #[test]
    fn identical_points_are_degenerate() {
        let x = Matrix::from_rows(&vec![vec![0.5, 0.5]; 30]).unwrap();
        let err = train_filter2(&x, FeatureSpace::All, &cfg(5)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn k_max_shrinks_to_distinct_rows() {
        let x = Matrix::from_rows(&[[0.0], [0.0], [1.0], [5.0]]).unwrap();
        let m = train_filter2(&x, FeatureSpace::All, &cfg(20)).unwrap();
        assert!(m.k_star <= 3);
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn thresholds_are_nearest_rank() {
        let mut m = train_filter2(&three_blobs(2), FeatureSpace::All, &cfg(4)).unwrap();
        let c0 = m.centroids.row(0).to_vec();
        // Distances 0.01..=0.05 from centroid 0, far from every other one.
        let rows: Vec<Vec<f64>> = (1..=5).map(|i| vec![c0[0], c0[1] - 0.01 * i as f64]).collect();
        let th = set_cluster_thresholds(&m, &Matrix::from_rows(&rows).unwrap(), 100.0).unwrap();
        assert!((th[0] - 0.05).abs() < 1e-12);
        assert!(th[1..].iter().all(|&t| t == 0.0));
        m.calibrate(&Matrix::from_rows(&rows).unwrap(), 60.0).unwrap();
        assert!((m.per_cluster_thresholds.as_ref().unwrap()[0] - 0.03).abs() < 1e-12);
        assert!(set_cluster_thresholds(&m, &Matrix::zeros(0, 2), 100.0).is_err());
    }

    #[test]
    fn centroid_is_known_and_tanh_boundary() {
        let m = train_filter2(&three_blobs(3), FeatureSpace::All, &cfg(4)).unwrap();
        let c = m.centroids.row(1).to_vec();
        let v = m.score_and_classify(&c, ThresholdMode::GlobalTanh(0.75)).unwrap();
        assert_eq!((v.cluster, v.distance, v.tanh_score, v.known), (1, 0.0, 0.0, true));
        assert!((0.9730f64.tanh() - 0.75).abs() < 1e-4);
        let far = vec![c[0] + 0.98, c[1]];
        let v = m.score_and_classify(&far, ThresholdMode::GlobalTanh(0.75)).unwrap();
        assert!(!v.known);
        assert!(m.score_and_classify(&c, ThresholdMode::PerCluster).is_err());
    }

    #[test]
    fn normalized_distance_uses_cluster_spread() {
        let config = PipelineConfig { distance_mode: DistanceMode::NormalizedEuclidean, ..cfg(4) };
        let m = train_filter2(&three_blobs(4), FeatureSpace::All, &config).unwrap();
        m.validate().unwrap();
        let std = m.per_cluster_std.as_ref().unwrap();
        let c = m.centroids.row(0).to_vec();
        let p = vec![c[0] + std.get(0, 0), c[1] + std.get(0, 1)];
        let (cl, d) = m.assign(&p);
        assert_eq!(cl, 0);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_spread_is_replaced() {
        // One cluster spreads only along x, so its y deviation is zero.
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64 * 0.1, 0.0])
            .chain((0..10).map(|i| vec![50.0 + i as f64 * 0.2, 40.0 + i as f64 * 0.3]))
            .collect();
        let config = PipelineConfig { distance_mode: DistanceMode::NormalizedEuclidean, ..cfg(2) };
        let m = train_filter2(&Matrix::from_rows(&rows).unwrap(), FeatureSpace::All, &config).unwrap();
        assert_eq!(m.std_replacements, 1);
        m.validate().unwrap();
    }

    #[test]
    fn serde_round_trip() {
        let mut m = train_filter2(&three_blobs(5), FeatureSpace::All, &cfg(4)).unwrap();
        m.calibrate(&three_blobs(6), 95.0).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: Filter2Model = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn seeded_determinism() {
        let x = three_blobs(7);
        let a = train_filter2(&x, FeatureSpace::All, &cfg(6)).unwrap();
        let b = train_filter2(&x, FeatureSpace::All, &cfg(6)).unwrap();
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn verdicts_follow_nearest_centroid_and_tau(
            seed in 0u64..1000,
            probe in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..20),
            tau in 0.01f64..0.99,
        ) {
            let x = three_blobs(seed);
            let cfg = PipelineConfig { k_max: 5, rng_seed: seed, ..Default::default() };
            let model = train_filter2(&x, FeatureSpace::All, &cfg).unwrap();
            for (a, b) in probe {
                let row = [a, b];
                let v = model.score_and_classify(&row, ThresholdMode::GlobalTanh(tau)).unwrap();
                let best = (0..model.k_star)
                    .map(|c| crate::matrix::euclidean(&row, model.centroids.row(c)))
                    .fold(f64::INFINITY, f64::min);
                proptest::prop_assert!((v.distance - best).abs() < 1e-9);
                proptest::prop_assert!((0.0..=1.0).contains(&v.tanh_score));
                proptest::prop_assert_eq!(v.known, v.distance.tanh() < tau);
            }
        }
    }
}
