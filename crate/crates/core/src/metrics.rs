//! Forecast accuracy: MAPE (as a ratio), RMSE and R².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest |actual| accepted by [`mape`].
pub const MAPE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mape: f64,
    pub rmse: f64,
    pub r2: f64,
}

impl MetricTriple {
    pub fn evaluate(actual: &[f64], predicted: &[f64]) -> Result<Self> {
        Ok(Self {
            mape: mape(actual, predicted)?,
            rmse: rmse(actual, predicted)?,
            r2: r2(actual, predicted)?,
        })
    }
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Empty("metrics need at least one pair".into()));
    }
    Ok(())
}

pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let mut sum = 0.0;
    for (index, (a, p)) in actual.iter().zip(predicted).enumerate() {
        if a.abs() <= MAPE_EPSILON {
            return Err(Error::NearZeroActual { index });
        }
        sum += ((a - p) / a).abs();
    }
    Ok(sum / actual.len() as f64)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// `1 - SS_res / SS_tot`, with `SS_tot` taken about the mean of `actual`.
pub fn r2(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if actual.len() < 2 {
        return Err(Error::InvalidArgument("R² needs at least two points".into()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantActual);
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
