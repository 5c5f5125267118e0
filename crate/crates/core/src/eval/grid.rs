use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{evaluate, EvalReport};
use crate::config::{ClusteringFeatures, DistanceMode, IpTreatment, NumericTreatment, PipelineConfig};
use crate::error::{Error, Result};
use crate::model::FlowRecord;
use crate::pipeline::{fit, StageTimings};

/// Values tried along each grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub ip_treatment: Vec<IpTreatment>,
    pub numeric_treatment: Vec<NumericTreatment>,
    pub pctl_frequent: Vec<f64>,
    pub clustering_features: Vec<ClusteringFeatures>,
    pub distance_mode: Vec<DistanceMode>,
}

impl Default for GridAxes {
    /// The full 2 × 2 × 2 × 4 × 2 grid.
    fn default() -> Self {
        GridAxes {
            ip_treatment: IpTreatment::ALL.to_vec(),
            numeric_treatment: NumericTreatment::ALL.to_vec(),
            pctl_frequent: vec![60.0, 70.0],
            clustering_features: ClusteringFeatures::ALL.to_vec(),
            distance_mode: DistanceMode::ALL.to_vec(),
        }
    }
}

impl GridAxes {
    /// A grid holding only the base configuration's value on every axis.
    pub fn single(base: &PipelineConfig) -> Self {
        GridAxes {
            ip_treatment: vec![base.ip_treatment],
            numeric_treatment: vec![base.numeric_treatment],
            pctl_frequent: vec![base.pctl_frequent],
            clustering_features: vec![base.clustering_features],
            distance_mode: vec![base.distance_mode],
        }
    }

    pub fn configs(&self, base: &PipelineConfig) -> Vec<PipelineConfig> {
        let mut out = Vec::new();
        for &ip in &self.ip_treatment {
            for &nt in &self.numeric_treatment {
                for &p in &self.pctl_frequent {
                    for &cf in &self.clustering_features {
                        for &dm in &self.distance_mode {
                            out.push(PipelineConfig {
                                ip_treatment: ip,
                                numeric_treatment: nt,
                                pctl_frequent: p,
                                clustering_features: cf,
                                distance_mode: dm,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: PipelineConfig,
    pub macro_auprc: Option<f64>,
    pub report: Option<EvalReport>,
    /// Set when this combination failed; the grid run continues.
    pub error: Option<String>,
}

fn rank_key(e: &GridEntry) -> f64 {
    e.macro_auprc.unwrap_or(f64::NEG_INFINITY)
}

/// Trains and evaluates every combination under the base seed, ordered by
/// macro-AUPRC (best first; failures last; ties keep grid order).
pub fn run_grid(
    training: &[FlowRecord],
    validation: &[FlowRecord],
    test: &[FlowRecord],
    base: &PipelineConfig,
    axes: &GridAxes,
) -> Vec<GridEntry> {
    let mut entries: Vec<GridEntry> = axes
        .configs(base)
        .into_par_iter()
        .map(|config| {
            let outcome = fit(training, validation, &config, &mut StageTimings::default())
                .and_then(|model| evaluate(&model, test));
            match outcome {
                Ok(ev) => GridEntry {
                    config,
                    macro_auprc: ev.report.macro_avg.auprc,
                    report: Some(ev.report),
                    error: None,
                },
                Err(e) => GridEntry { config, macro_auprc: None, report: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    entries.sort_by(|a, b| rank_key(b).total_cmp(&rank_key(a)));
    entries
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub training_rows: usize,
    pub validation_rows: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auprc: Option<f64>,
    pub error: Option<String>,
}

/// The most recent `size` flows of the pool, split 80/20 chronologically.
pub fn most_recent_split(pool: &[FlowRecord], size: usize) -> Result<(Vec<FlowRecord>, Vec<FlowRecord>)> {
    if size > pool.len() {
        return Err(Error::Config(format!("size {size} exceeds the {} available pool flows", pool.len())));
    }
    let mut sorted: Vec<&FlowRecord> = pool.iter().collect();
    sorted.sort_by_key(|r| r.flow_start_ms);
    let recent = &sorted[sorted.len() - size..];
    let cut = size * 4 / 5;
    Ok((
        recent[..cut].iter().map(|r| (*r).clone()).collect(),
        recent[cut..].iter().map(|r| (*r).clone()).collect(),
    ))
}

fn sweep_one(pool: &[FlowRecord], test: &[FlowRecord], size: usize, config: &PipelineConfig) -> SweepRow {
    let mut row = SweepRow {
        size,
        training_rows: 0,
        validation_rows: 0,
        precision: None,
        recall: None,
        f1: None,
        auprc: None,
        error: None,
    };
    let result = (|| -> Result<EvalReport> {
        let (train, val) = most_recent_split(pool, size)?;
        row.training_rows = train.len();
        row.validation_rows = val.len();
        let model = fit(&train, &val, config, &mut StageTimings::default())?;
        if model.filter2.training_rows < config.k_max {
            return Err(Error::Degenerate(format!(
                "only {} infrequent training rows for k_max {}",
                model.filter2.training_rows, config.k_max
            )));
        }
        Ok(evaluate(&model, test)?.report)
    })();
    match result {
        Ok(r) => {
            row.precision = r.macro_avg.precision;
            row.recall = r.macro_avg.recall;
            row.f1 = r.macro_avg.f1;
            row.auprc = r.macro_avg.auprc;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Trains on the most recent `size` pool flows for each size and evaluates
/// on the fixed test partition. Failed sizes are reported, not fatal.
pub fn sensitivity_sweep(
    pool: &[FlowRecord],
    test: &[FlowRecord],
    sizes: &[usize],
    config: &PipelineConfig,
) -> Vec<SweepRow> {
    sizes.par_iter().map(|&size| sweep_one(pool, test, size, config)).collect()
}
