use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Min-max statistics of the training temperatures.
///
/// Only `t_mid` is scaled; the cyclic time encodings already live in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: f64,
    pub max: f64,
}

impl ScalerParams {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidArgument("scaler bounds must be finite".into()));
        }
        if max < min {
            return Err(Error::InvalidArgument(format!("scaler max {max} < min {min}")));
        }
        if max == min {
            return Err(Error::DegenerateScaler(min));
        }
        Ok(Self { min, max })
    }

    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("cannot fit a scaler on no data".into()));
        }
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self::new(min, max)
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }
}
