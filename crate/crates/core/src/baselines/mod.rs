//! One-step novelty detectors used as benchmarks: a standalone
//! autoencoder, standalone k-means, local outlier factor and isolation
//! forest. All score test rows so that higher means more anomalous.

mod iforest;
mod lof;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DistanceMode, PipelineConfig};
use crate::encode::{fit_recipe, FeatureSpace};
use crate::error::Result;
use crate::eval::{auprc, evaluate, macro_average};
use crate::filter1::train_autoencoder;
use crate::filter2::train_filter2;
use crate::matrix::Matrix;
use crate::model::{FlowRecord, LabelClass};
use crate::pipeline::{fit, StageTimings};
use crate::stats::derive_seed;

pub use iforest::{average_path_length, score_if, DEFAULT_SUBSAMPLE, DEFAULT_TREES};
pub use lof::{score_lof, DEFAULT_NEIGHBORS, DENSITY_FLOOR};

pub const BENCH_SCHEMA_VERSION: u32 = 1;
/// Training rows kept for LOF, whose neighbor search is quadratic.
pub const DEFAULT_LOF_TRAIN_CAP: usize = 10_000;

/// Reconstruction MSE of an autoencoder trained exactly like the
/// frequency filter.
pub fn score_ae_one_step(train: &Matrix, validation: &Matrix, test: &Matrix, config: &PipelineConfig) -> Result<Vec<f64>> {
    let (ae, _) = train_autoencoder(train, validation, config)?;
    ae.mse_rows(test)
}

/// tanh of the raw distance to the nearest centroid, with k chosen by
/// silhouette on the full training matrix.
pub fn score_kmeans_one_step(train: &Matrix, test: &Matrix, config: &PipelineConfig) -> Result<Vec<f64>> {
    let cfg = PipelineConfig { distance_mode: DistanceMode::RawEuclidean, ..config.clone() };
    let model = train_filter2(train, FeatureSpace::All, &cfg)?;
    Ok(model.assign_rows(test)?.into_iter().map(|(_, d)| d.tanh()).collect())
}

/// Seeded subsample of at most `cap` rows, in original order.
pub fn subsample_rows(x: &Matrix, cap: usize, seed: u64) -> Matrix {
    if x.rows() <= cap {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, x.rows(), cap).into_vec();
    idx.sort_unstable();
    x.select_rows(&idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub nmap_auprc: Option<f64>,
    pub cryptomining_auprc: Option<f64>,
    pub macro_auprc: Option<f64>,
    pub reproduced: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub encoding: String,
    pub lof_neighbors: usize,
    pub lof_training_rows: usize,
    pub if_trees: usize,
    pub if_subsample: usize,
    pub rows: Vec<BenchRow>,
    pub config: PipelineConfig,
}

impl BenchReport {
    pub fn row(&self, method: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn bench_row(method: &str, scores: &[f64], actual: &[LabelClass]) -> Result<BenchRow> {
    let per = |s: LabelClass| -> Result<Option<f64>> {
        if actual.contains(&s) {
            Ok(Some(auprc(scores, actual, s)?))
        } else {
            Ok(None)
        }
    };
    let nmap = per(LabelClass::BeingScannedByNmap)?;
    let crypto = per(LabelClass::ExecutingCryptomining)?;
    Ok(BenchRow {
        method: method.into(),
        nmap_auprc: nmap,
        cryptomining_auprc: crypto,
        macro_auprc: macro_average(&[nmap, crypto]),
        reproduced: true,
        note: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub lof_neighbors: usize,
    pub lof_train_cap: usize,
    pub if_trees: usize,
    pub if_subsample: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            lof_neighbors: DEFAULT_NEIGHBORS,
            lof_train_cap: DEFAULT_LOF_TRAIN_CAP,
            if_trees: DEFAULT_TREES,
            if_subsample: DEFAULT_SUBSAMPLE,
        }
    }
}

/// Runs the two-step pipeline and every one-step baseline on the same
/// partitions and encoding, reporting AUPRC per attack scenario.
pub fn run_bench(
    training: &[FlowRecord],
    validation: &[FlowRecord],
    test: &[FlowRecord],
    config: &PipelineConfig,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    let actual: Vec<LabelClass> = test.iter().map(|r| r.actual_label).collect();
    let mut timings = StageTimings::default();
    let model = fit(training, validation, config, &mut timings)?;
    let ev = evaluate(&model, test)?;
    let scenario = |l: LabelClass| ev.report.scenario(l).and_then(|s| s.auprc);
    let mut rows = vec![BenchRow {
        method: "two-step".into(),
        nmap_auprc: scenario(LabelClass::BeingScannedByNmap),
        cryptomining_auprc: scenario(LabelClass::ExecutingCryptomining),
        macro_auprc: ev.report.macro_avg.auprc,
        reproduced: true,
        note: None,
    }];

    let recipe = fit_recipe(training, config)?;
    let xt = recipe.apply(training).values;
    let xv = recipe.apply(validation).values;
    let xs = recipe.apply(test).values;

    let ae = timings.record("bench-ae", || score_ae_one_step(&xt, &xv, &xs, config))?;
    rows.push(bench_row("AE", &ae, &actual)?);
    let km = timings.record("bench-kmeans", || score_kmeans_one_step(&xt, &xs, config))?;
    rows.push(bench_row("k-Means", &km, &actual)?);
    let lof_train = subsample_rows(&xt, opts.lof_train_cap, derive_seed(config.rng_seed, 0x10f));
    let lof = timings.record("bench-lof", || score_lof(&lof_train, &xs, opts.lof_neighbors))?;
    rows.push(bench_row("LOF", &lof, &actual)?);
    let iforest = timings.record("bench-if", || {
        score_if(&xt, &xs, opts.if_trees, opts.if_subsample, derive_seed(config.rng_seed, 0x1f))
    })?;
    rows.push(bench_row("IF", &iforest, &actual)?);
    rows.push(BenchRow {
        method: "OCSVM".into(),
        nmap_auprc: Some(0.885),
        cryptomining_auprc: Some(0.129),
        macro_auprc: Some(0.507),
        reproduced: false,
        note: Some("published value, not reproduced".into()),
    });

    Ok(BenchReport {
        schema_version: BENCH_SCHEMA_VERSION,
        encoding: format!(
            "shared pipeline encoding (ip {}, numeric {})",
            config.ip_treatment, config.numeric_treatment
        ),
        lof_neighbors: opts.lof_neighbors,
        lof_training_rows: lof_train.rows(),
        if_trees: opts.if_trees,
        if_subsample: opts.if_subsample,
        rows,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn two_blobs_with_outliers() -> (Matrix, Matrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut train = Vec::new();
        for c in [0.0, 10.0] {
            for _ in 0..50 {
                train.push(vec![c + rng.random::<f64>(), c + rng.random::<f64>()]);
            }
        }
        let mut test = train[..20].to_vec();
        test.extend(train[50..70].iter().cloned());
        let n_in = test.len();
        test.push(vec![100.0, 0.0]);
        test.push(vec![-100.0, 50.0]);
        let outlier: Vec<bool> = (0..test.len()).map(|i| i >= n_in).collect();
        (Matrix::from_rows(&train).unwrap(), Matrix::from_rows(&test).unwrap(), outlier)
    }

    #[test]
    fn kmeans_outliers_rank_above_inliers() {
        let (train, test, outlier) = two_blobs_with_outliers();
        let cfg = PipelineConfig { k_max: 5, ..Default::default() };
        let s = score_kmeans_one_step(&train, &test, &cfg).unwrap();
        assert_eq!(s.len(), test.rows());
        let max_in = s.iter().zip(&outlier).filter(|(_, o)| !**o).map(|(v, _)| *v).fold(0.0, f64::max);
        let min_out = s.iter().zip(&outlier).filter(|(_, o)| **o).map(|(v, _)| *v).fold(1.0, f64::min);
        assert!(min_out > max_in);
    }

    #[test]
    fn point_at_centroid_scores_zero() {
        let (train, _, _) = two_blobs_with_outliers();
        let cfg = PipelineConfig { k_max: 3, ..Default::default() };
        let model = train_filter2(&train, FeatureSpace::All, &cfg).unwrap();
        let s = score_kmeans_one_step(&train, &model.centroids, &cfg).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_data_ae_is_uninformative() {
        let x = Matrix::from_rows(&vec![vec![0.5, 0.5, 0.5, 0.5]; 64]).unwrap();
        let cfg = PipelineConfig { epochs_max: 3, ..Default::default() };
        let s = score_ae_one_step(&x, &x, &x, &cfg).unwrap();
        assert_eq!(s.len(), 64);
        let labels: Vec<LabelClass> = (0..64)
            .map(|i| if i % 4 == 0 { LabelClass::BeingScannedByNmap } else { LabelClass::AssumedBenign })
            .collect();
        let ap = auprc(&s, &labels, LabelClass::BeingScannedByNmap).unwrap();
        assert!((ap - 0.25).abs() < 1e-12);
    }

    #[test]
    fn subsample_caps_rows() {
        let (train, _, _) = two_blobs_with_outliers();
        assert_eq!(subsample_rows(&train, 30, 1).rows(), 30);
        assert_eq!(subsample_rows(&train, 1000, 1), train);
    }
}
