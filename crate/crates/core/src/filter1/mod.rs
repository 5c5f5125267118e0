//! Frequency filter: an autoencoder trained on pooled benign traffic whose
//! reconstruction error separates frequent from infrequent flows.

mod network;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::encode::EncodingRecipe;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats;

pub use network::{layer_dims, Adam, Autoencoder, DenseLayer};

pub const FILTER1_SCHEMA_VERSION: u32 = 1;

/// Early-stopping bookkeeping for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub previous_mse: f64,
    /// Consecutive epochs whose improvement fell below `delta_min`.
    pub low_improvement_epochs: usize,
}

impl TrainState {
    pub fn new() -> Self {
        TrainState { epoch: 0, previous_mse: f64::INFINITY, low_improvement_epochs: 0 }
    }

    /// Records one epoch's validation MSE; returns `true` when training
    /// should stop.
    pub fn observe(&mut self, validation_mse: f64, config: &PipelineConfig) -> bool {
        self.epoch += 1;
        let improvement = self.previous_mse - validation_mse;
        if improvement < config.delta_min {
            self.low_improvement_epochs += 1;
        } else {
            self.low_improvement_epochs = 0;
        }
        self.previous_mse = validation_mse;
        self.epoch >= config.epochs_max || self.low_improvement_epochs >= config.patience_max
    }
}

impl Default for TrainState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub validation_mse: Vec<f64>,
    pub training_loss: Vec<f64>,
}

impl TrainingHistory {
    pub fn epochs(&self) -> usize {
        self.validation_mse.len()
    }
}

/// Trains the autoencoder with Adam on shuffled mini-batches, checking
/// validation MSE after every epoch. Returns the final-epoch weights.
pub fn train_autoencoder(
    training: &Matrix,
    validation: &Matrix,
    config: &PipelineConfig,
) -> Result<(Autoencoder, TrainingHistory)> {
    if training.cols() != validation.cols() {
        return Err(Error::DimensionMismatch { expected: training.cols(), actual: validation.cols() });
    }
    if training.is_empty() || validation.is_empty() {
        return Err(Error::Data("autoencoder needs non-empty training and validation sets".into()));
    }
    let mut ae = Autoencoder::new(training.cols(), config.rng_seed)?;
    let mut adam = Adam::new(ae.params().len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x5ee_d0fb_a7c4);
    let mut order: Vec<usize> = (0..training.rows()).collect();
    let mut grad = vec![0.0; ae.params().len()];
    let mut ws = ae.workspace();
    let mut state = TrainState::new();
    let mut history = TrainingHistory { validation_mse: Vec::new(), training_loss: Vec::new() };
    let mut batch: Vec<&[f64]> = Vec::with_capacity(config.batch_size);

    loop {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| training.row(i)));
            let loss = ae.accumulate_gradient(&batch, &mut ws, &mut grad);
            if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::Diverged { epoch: state.epoch + 1 });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(ae.params_mut(), &grad);
        }
        let val = stats::mean(&ae.mse_rows(validation)?).unwrap_or(0.0);
        if !val.is_finite() {
            return Err(Error::Diverged { epoch: state.epoch + 1 });
        }
        history.training_loss.push(epoch_loss / training.rows() as f64);
        history.validation_mse.push(val);
        if state.observe(val, config) {
            break;
        }
    }
    Ok((ae, history))
}

/// Per-row reconstruction MSE.
pub fn compute_mse(ae: &Autoencoder, m: &Matrix) -> Result<Vec<f64>> {
    ae.mse_rows(m)
}

/// Nearest-rank percentile of the validation MSE distribution.
pub fn set_frequency_threshold(validation_mse: &[f64], pctl_frequent: f64) -> Result<f64> {
    stats::percentile(validation_mse, pctl_frequent)
        .ok_or_else(|| Error::Data("frequency threshold needs a non-empty validation set".into()))
}

/// Frequent iff the MSE is strictly below the threshold.
pub fn classify_frequent(mse: f64, th_frequent: f64) -> bool {
    mse < th_frequent
}

/// Trained frequency filter with its encoding recipe and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter1Model {
    pub schema_version: u32,
    pub recipe: EncodingRecipe,
    pub autoencoder: Autoencoder,
    pub th_frequent: f64,
    pub pctl_frequent: f64,
    pub seed: u64,
    pub history: TrainingHistory,
}

impl Filter1Model {
    pub fn layer_dims(&self) -> &[usize] {
        self.autoencoder.layer_dims()
    }

    pub fn is_frequent(&self, mse: f64) -> bool {
        classify_frequent(mse, self.th_frequent)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != FILTER1_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported filter1 schema version {}",
                self.schema_version
            )));
        }
        if !(self.th_frequent >= 0.0 && self.th_frequent.is_finite()) {
            return Err(Error::Schema("th_frequent must be finite and non-negative".into()));
        }
        let dims = self.layer_dims();
        if dims.first() != dims.last() || dims.iter().ne(dims.iter().rev()) {
            return Err(Error::Schema("layer_dims must be symmetric".into()));
        }
        if dims[0] != self.recipe.dim() {
            return Err(Error::DimensionMismatch { expected: self.recipe.dim(), actual: dims[0] });
        }
        Ok(())
    }
}

/// Trains the autoencoder and calibrates its frequency threshold on the
/// validation rows.
pub fn train_filter1(
    recipe: EncodingRecipe,
    training: &Matrix,
    validation: &Matrix,
    config: &PipelineConfig,
) -> Result<(Filter1Model, Vec<f64>)> {
    let (autoencoder, history) = train_autoencoder(training, validation, config)?;
    let val_mse = autoencoder.mse_rows(validation)?;
    let th_frequent = set_frequency_threshold(&val_mse, config.pctl_frequent)?;
    let model = Filter1Model {
        schema_version: FILTER1_SCHEMA_VERSION,
        recipe,
        autoencoder,
        th_frequent,
        pctl_frequent: config.pctl_frequent,
        seed: config.rng_seed,
        history,
    };
    Ok((model, val_mse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn hand_computed_mse() {
        let x = [0.5, 0.5];
        let xh = [0.4, 0.6];
        let mse: f64 = x.iter().zip(&xh).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0;
        assert!((mse - 0.01).abs() < 1e-15);
    }

    #[test]
    fn threshold_nearest_rank() {
        let mse: Vec<f64> = (1..=10).rev().map(f64::from).collect();
        assert_eq!(set_frequency_threshold(&mse, 60.0).unwrap(), 6.0);
        assert_eq!(set_frequency_threshold(&mse, 100.0).unwrap(), 10.0);
        assert!(set_frequency_threshold(&[], 60.0).is_err());
    }

    #[test]
    fn frequent_is_strict() {
        assert!(!classify_frequent(0.5, 0.5));
        assert!(classify_frequent(0.0, 1e-9));
    }

    #[test]
    fn infinite_delta_stops_after_patience_plus_one() {
        let cfg = PipelineConfig { delta_min: f64::INFINITY, epochs_max: 200, patience_max: 5, ..Default::default() };
        let t = random_matrix(40, 4, 1);
        let (_, h) = train_autoencoder(&t, &t, &cfg).unwrap();
        assert_eq!(h.epochs(), 6);
    }

    #[test]
    fn epochs_max_caps_training() {
        let cfg = PipelineConfig { delta_min: 1e-300, epochs_max: 3, ..Default::default() };
        let t = random_matrix(40, 4, 2);
        let (_, h) = train_autoencoder(&t, &t, &cfg).unwrap();
        assert_eq!(h.epochs(), 3);
    }

    #[test]
    fn memorizes_single_repeated_row() {
        let row = [0.2, 0.8, 0.5, 0.1, 0.9, 0.3];
        let m = Matrix::from_rows(&vec![row.to_vec(); 1024]).unwrap();
        let cfg = PipelineConfig { learning_rate: 0.01, epochs_max: 200, ..Default::default() };
        let (ae, h) = train_autoencoder(&m, &m, &cfg).unwrap();
        assert!(h.epochs() <= 200);
        assert!(ae.row_mse(&row) < 1e-4, "final mse {} after {}", ae.row_mse(&row), h.epochs());
    }

    #[test]
    fn training_is_deterministic() {
        let t = random_matrix(100, 5, 3);
        let v = random_matrix(30, 5, 4);
        let cfg = PipelineConfig { epochs_max: 5, ..Default::default() };
        let (a, ha) = train_autoencoder(&t, &v, &cfg).unwrap();
        let (b, hb) = train_autoencoder(&t, &v, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn training_loss_roughly_non_increasing() {
        let t = random_matrix(256, 6, 5);
        let cfg = PipelineConfig { epochs_max: 30, delta_min: 1e-300, patience_max: 100, ..Default::default() };
        let (_, h) = train_autoencoder(&t, &t, &cfg).unwrap();
        for w in h.training_loss.windows(2) {
            assert!(w[1] <= w[0] * 1.1, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cfg = PipelineConfig::default();
        assert!(train_autoencoder(&random_matrix(4, 4, 1), &random_matrix(4, 3, 1), &cfg).is_err());
    }
}
