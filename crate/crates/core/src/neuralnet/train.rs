use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::lstm::{forward_batch, gradients, Batch, LstmModel};
use super::{adam_step, make_windows, AdamState, WindowedDataset};
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::timeseries::RegularSeries;

const PREDICT_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Chronological tail of the windows held out for validation.
    pub val_fraction: f64,
    /// `0` visits every training window each epoch.
    pub windows_per_epoch: usize,
    /// `0` scores every validation window each epoch.
    pub val_windows: usize,
    pub seed: u64,
}

/// Per-epoch losses (scaled units) and timings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_mae: Vec<f64>,
    pub val_mae: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Epoch whose weights were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.train_mae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_mae.is_empty()
    }

    pub fn total_seconds(&self) -> f64 {
        self.epoch_seconds.iter().sum()
    }
}

fn predict_indices(model: &LstmModel, data: &WindowedDataset, indices: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(PREDICT_CHUNK) {
        let batch = Batch::from_dataset(data, chunk);
        out.extend(forward_batch(&model.params, &batch)?);
    }
    Ok(out)
}

fn mean_abs_error(pred: &[f64], targets: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = pred
        .iter()
        .zip(targets)
        .fold((0.0, 0usize), |(s, n), (p, y)| (s + (p - y).abs(), n + 1));
    sum / n.max(1) as f64
}

/// Minibatch training with Adam; returns the weights of the epoch with the
/// lowest validation MAE together with the full history.
///
/// The model's scaler is replaced by the dataset's, so a model fine-tuned on
/// another household predicts in that household's units afterwards. With no
/// validation windows (tiny datasets) the training MAE drives selection.
pub fn train(mut model: LstmModel, data: &WindowedDataset, opts: &TrainOptions) -> Result<(LstmModel, TrainHistory)> {
    if data.lookback() != model.config.lookback {
        return Err(Error::Shape(format!(
            "dataset lookback {} differs from model lookback {}",
            data.lookback(),
            model.config.lookback
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut history = TrainHistory::default();
    if opts.epochs == 0 {
        return Ok((model, history));
    }

    let n = data.len();
    let n_val = (n as f64 * opts.val_fraction).floor() as usize;
    let n_train = n - n_val;
    if n_train == 0 {
        return Err(Error::Empty("no training windows left after the validation split".into()));
    }
    let val_indices: Vec<usize> = if n_val == 0 {
        Vec::new()
    } else {
        let stride = match opts.val_windows {
            0 => 1,
            cap => n_val.div_ceil(cap),
        };
        (n_train..n).step_by(stride).collect()
    };
    let per_epoch = match opts.windows_per_epoch {
        0 => n_train,
        cap => cap.min(n_train),
    };

    model.scaler = *data.scaler();
    let mut adam = AdamState::new(&model.params);
    let mut rng = rng::stream(opts.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut best = (f64::INFINITY, model.params.clone());

    for epoch in 0..opts.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order[..per_epoch].chunks(opts.batch_size) {
            let batch = Batch::from_dataset(data, chunk);
            let (loss, grads) = gradients(&model.params, &batch)?;
            adam_step(&mut model.params, &grads, &mut adam, opts.learning_rate)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_mae = loss_sum / per_epoch as f64;
        let val_mae = if val_indices.is_empty() {
            train_mae
        } else {
            let pred = predict_indices(&model, data, &val_indices)?;
            mean_abs_error(&pred, val_indices.iter().map(|&i| data.targets()[i]))
        };
        if let Some(name) = model.params.first_non_finite() {
            return Err(Error::NonFiniteParameter(name));
        }
        if val_mae < best.0 {
            best = (val_mae, model.params.clone());
            history.best_epoch = Some(epoch);
        }
        history.train_mae.push(train_mae);
        history.val_mae.push(val_mae);
        history.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    model.params = best.1;
    Ok((model, history))
}

/// Teacher-forced one-step-ahead forecast over `test`, in °C.
///
/// Every window uses observed history, so the output starts `lookback`
/// steps after the test start and has `len - lookback` points.
pub fn predict_series(model: &LstmModel, test: &RegularSeries) -> Result<RegularSeries> {
    model.check_shapes()?;
    let data = make_windows(test, &model.config, Some(model.scaler))?;
    let indices: Vec<usize> = (0..data.len()).collect();
    let scaled = predict_indices(model, &data, &indices)?;
    let values = scaled.into_iter().map(|y| model.scaler.unscale(y)).collect();
    RegularSeries::new(test.household_id(), data.target_time(0), test.step_seconds(), values)
}

/// Naive forecast repeating the previous observation, aligned with
/// [`predict_series`] for the same `lookback`.
pub fn persistence_forecast(test: &RegularSeries, lookback: usize) -> Result<RegularSeries> {
    if test.len() <= lookback || lookback == 0 {
        return Err(Error::SeriesTooShort {
            len: test.len(),
            need: lookback.max(1),
        });
    }
    let values = test.values()[lookback - 1..test.len() - 1].to_vec();
    RegularSeries::new(test.household_id(), test.timestamp(lookback), test.step_seconds(), values)
}
