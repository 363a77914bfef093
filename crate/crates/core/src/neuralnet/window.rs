use std::f64::consts::TAU;

use ndarray::{Array2, ArrayView2, s};

use super::{LstmConfig, ScalerParams};
use crate::error::{Error, Result};
use crate::timeseries::RegularSeries;

/// Per-timestep features: scaled `t_mid`, then sin/cos of time of day and
/// sin/cos of position within the week (Monday 00:00 = phase 0).
pub const N_FEATURES: usize = 5;

/// The four cyclic encodings for a UTC timestamp.
pub fn time_features(ts: i64) -> [f64; 4] {
    let seconds_of_day = ts.rem_euclid(86_400);
    // 1970-01-01 was a Thursday, three days after a Monday.
    let day_of_week = (ts.div_euclid(86_400) + 3).rem_euclid(7);
    let day_phase = TAU * seconds_of_day as f64 / 86_400.0;
    let week_phase = TAU * (day_of_week as f64 + seconds_of_day as f64 / 86_400.0) / 7.0;
    [day_phase.sin(), day_phase.cos(), week_phase.sin(), week_phase.cos()]
}

/// Sliding windows over one series.
///
/// Windows are views into a shared `T x n_features` feature matrix rather
/// than a materialised `N x lookback x n_features` tensor: window `i` covers
/// rows `i .. i + lookback` and its target is the scaled value at row
/// `i + lookback`.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    features: Array2<f64>,
    targets: Vec<f64>,
    lookback: usize,
    scaler: ScalerParams,
    target_start: i64,
    step_seconds: u32,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn scaler(&self) -> &ScalerParams {
        &self.scaler
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn window(&self, i: usize) -> ArrayView2<'_, f64> {
        self.features.slice(s![i..i + self.lookback, ..])
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Timestamp of the value predicted by window `i`.
    pub fn target_time(&self, i: usize) -> i64 {
        self.target_start + i as i64 * i64::from(self.step_seconds)
    }

    pub fn step_seconds(&self) -> u32 {
        self.step_seconds
    }
}

/// Builds windows for `series`. Without a `scaler` one is fitted on this series.
pub fn make_windows(series: &RegularSeries, config: &LstmConfig, scaler: Option<ScalerParams>) -> Result<WindowedDataset> {
    let lookback = config.lookback;
    if lookback == 0 {
        return Err(Error::InvalidArgument("lookback must be positive".into()));
    }
    if series.len() <= lookback {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            need: lookback,
        });
    }
    let scaler = match scaler {
        Some(s) => s,
        None => ScalerParams::fit(series.values())?,
    };

    let n = series.len();
    let mut features = Array2::zeros((n, N_FEATURES));
    for (i, (mut row, &v)) in features.rows_mut().into_iter().zip(series.values()).enumerate() {
        let [a, b, c, d] = time_features(series.timestamp(i));
        row[0] = scaler.scale(v);
        row[1] = a;
        row[2] = b;
        row[3] = c;
        row[4] = d;
    }
    let targets = features.column(0).slice(s![lookback..]).to_vec();
    Ok(WindowedDataset {
        features,
        targets,
        lookback,
        scaler,
        target_start: series.timestamp(lookback),
        step_seconds: series.step_seconds(),
    })
}
