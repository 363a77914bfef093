//! Single-layer LSTM regressor trained with MAE loss and Adam.

mod adam;
mod checkpoint;
mod lstm;
mod scaler;
mod train;
mod window;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{load_model, model_from_json, model_to_json, save_model, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use lstm::{forward, forward_batch, gradients, mae_loss, Batch, LstmModel, LstmParams};
pub use scaler::ScalerParams;
pub use train::{persistence_forecast, predict_series, train, TrainHistory, TrainOptions};
pub use window::{make_windows, time_features, WindowedDataset, N_FEATURES};

/// Model and training hyperparameters.
///
/// `units`, `epochs` and `batch_size` default to the reference values
/// (50, 50, 72). `windows_per_epoch` caps how many shuffled training windows
/// one epoch visits; `0` means a full pass over the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmConfig {
    pub units: usize,
    pub lookback: usize,
    pub n_features: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub fine_tune_epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub windows_per_epoch: usize,
    /// Upper bound on validation windows scored per epoch (evenly strided); `0` = all.
    pub val_windows: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            units: 50,
            lookback: 60,
            n_features: N_FEATURES,
            epochs: 50,
            batch_size: 72,
            learning_rate: 0.001,
            fine_tune_epochs: 10,
            seed: 42,
            val_fraction: 0.1,
            windows_per_epoch: 4096,
            val_windows: 1024,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("units", self.units),
            ("lookback", self.lookback),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("fine_tune_epochs", self.fine_tune_epochs),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.n_features != N_FEATURES {
            return Err(Error::InvalidArgument(format!(
                "n_features must be {N_FEATURES} (t_mid plus four cyclic time encodings)"
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidArgument("val_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn train_options(&self, epochs: usize, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            val_fraction: self.val_fraction,
            windows_per_epoch: self.windows_per_epoch,
            val_windows: self.val_windows,
            seed,
        }
    }
}
