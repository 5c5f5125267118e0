//! End-to-end composition of the two filters.

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::encode::{fit_recipe, FeatureSpace};
use crate::error::{Error, Result};
use crate::filter1::{train_filter1, Filter1Model};
use crate::filter2::{train_filter2, Filter2Model, ThresholdMode};
use crate::matrix::Matrix;
use crate::model::{FlowRecord, Verdict};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Both trained filters and the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadeshModel {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub filter1: Filter1Model,
    pub filter2: Filter2Model,
}

/// Wall-clock seconds per stage. Never serialized with models or reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings {
    pub stages: Vec<(String, f64)>,
}

impl StageTimings {
    pub fn record<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        info!("stage {name}: {secs:.2}s");
        self.stages.push((name.to_string(), secs));
        out
    }
}

/// Rows whose MSE is at or above the frequency threshold.
pub fn infrequent_rows(mse: &[f64], th_frequent: f64) -> Vec<usize> {
    (0..mse.len()).filter(|&i| mse[i] >= th_frequent).collect()
}

impl CadeshModel {
    pub fn threshold_mode(&self) -> ThresholdMode {
        ThresholdMode::from_config(&self.config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema(format!("unsupported model schema version {}", self.schema_version)));
        }
        self.filter1.validate()?;
        self.filter2.validate()
    }

    /// Projects encoded rows into the clustering space.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        self.filter2.feature_space.project(x, Some(&self.filter1.autoencoder))
    }

    /// Encodes `flows`, returning the matrix and per-row MSE.
    pub fn encode_and_score(&self, flows: &[FlowRecord]) -> Result<(Matrix, Vec<f64>)> {
        let x = self.filter1.recipe.apply(flows).values;
        let mse = self.filter1.autoencoder.mse_rows(&x)?;
        Ok((x, mse))
    }

    /// Sets the per-cluster thresholds from the infrequent validation flows.
    pub fn calibrate(&mut self, validation: &[FlowRecord]) -> Result<()> {
        let (x, mse) = self.encode_and_score(validation)?;
        let rows = infrequent_rows(&mse, self.filter1.th_frequent);
        let z = self.project(&x.select_rows(&rows))?;
        self.filter2.calibrate(&z, self.config.pctl_known)
    }

    pub fn detect(&self, flows: &[FlowRecord]) -> Result<Vec<Verdict>> {
        self.detect_with(flows, self.threshold_mode())
    }

    pub fn detect_with(&self, flows: &[FlowRecord], mode: ThresholdMode) -> Result<Vec<Verdict>> {
        let (x, mse) = self.encode_and_score(flows)?;
        let rows = infrequent_rows(&mse, self.filter1.th_frequent);
        let z = self.project(&x.select_rows(&rows))?;
        let scored = self.filter2.score_rows(&z, mode)?;
        let mut verdicts: Vec<Verdict> = mse.iter().enumerate().map(|(i, &m)| Verdict::frequent(i, m)).collect();
        for (&i, cv) in rows.iter().zip(scored) {
            verdicts[i] = Verdict::infrequent(i, mse[i], cv);
        }
        Ok(verdicts)
    }
}

/// Trains both filters. The frequency threshold is set on `validation`;
/// per-cluster thresholds are left for [`CadeshModel::calibrate`].
pub fn train(
    training: &[FlowRecord],
    validation: &[FlowRecord],
    config: &PipelineConfig,
    timings: &mut StageTimings,
) -> Result<CadeshModel> {
    config.validate()?;
    if training.is_empty() || validation.is_empty() {
        return Err(Error::Data("training and validation partitions must be non-empty".into()));
    }
    let recipe = timings.record("encode", || fit_recipe(training, config))?;
    let xt = recipe.apply(training).values;
    let xv = recipe.apply(validation).values;
    let (filter1, _) = timings.record("filter1", || train_filter1(recipe.clone(), &xt, &xv, config))?;
    info!(
        "filter1: {} epochs, th_frequent {:.6}",
        filter1.history.epochs(),
        filter1.th_frequent
    );

    let filter2 = timings.record("filter2", || -> Result<Filter2Model> {
        let mse = filter1.autoencoder.mse_rows(&xt)?;
        let infrequent = xt.select_rows(&infrequent_rows(&mse, filter1.th_frequent));
        let space = FeatureSpace::fit(config.clustering_features, &recipe, &infrequent)?;
        let z = space.project(&infrequent, Some(&filter1.autoencoder))?;
        train_filter2(&z, space, config)
    })?;
    info!("filter2: k* = {}", filter2.k_star);
    Ok(CadeshModel { schema_version: MODEL_SCHEMA_VERSION, config: config.clone(), filter1, filter2 })
}

/// [`train`] followed by calibration on the same validation flows.
pub fn fit(
    training: &[FlowRecord],
    validation: &[FlowRecord],
    config: &PipelineConfig,
    timings: &mut StageTimings,
) -> Result<CadeshModel> {
    let mut model = train(training, validation, config, timings)?;
    timings.record("calibrate", || model.calibrate(validation))?;
    Ok(model)
}
