//! Flat `key = value` pipeline configuration (TOML syntax, no tables).
//!
//! ```toml
//! seed = 42
//! out_dir = "out"
//! epochs = 50
//! contamination = 0.02
//! timezone = "+01:00"
//! ```
//!
//! Every key is optional; unknown keys are rejected. Household data comes from
//! `input_dir` (one `timestamp,t_mid` CSV per household, id = file stem, and
//! `split_time` required) or, when `input_dir` is empty, from the built-in
//! synthetic profiles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eventdetect::EventConfig;
use crate::neuralnet::{LstmConfig, N_FEATURES};
use crate::timeseries::{parse_timestamp, OutlierConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    /// Every household is pretrained once and fine-tuned onto all others.
    All,
    /// One seeded random source only.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub input_dir: PathBuf,
    pub split_time: String,
    pub synth_start: String,
    pub synth_train_days: u32,
    pub synth_test_days: u32,
    /// Fixed UTC offset for calendar binning: `UTC`, `Z`, `+HH:MM` or `-HH:MM`.
    pub timezone: String,
    pub source_mode: SourceMode,
    /// Write wall-clock seconds into the matrix CSV (makes it non-reproducible).
    pub record_timings: bool,

    pub units: usize,
    pub lookback: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub fine_tune_epochs: usize,
    pub val_fraction: f64,
    pub windows_per_epoch: usize,
    pub val_windows: usize,

    pub range_min: f64,
    pub range_max: f64,
    pub rate_limit: f64,

    pub contamination: f64,
    pub delta_window: usize,
    pub refractory: usize,
    pub n_trees: usize,
    pub subsample: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let lstm = LstmConfig::default();
        let outlier = OutlierConfig::default();
        let events = EventConfig::default();
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            input_dir: PathBuf::new(),
            split_time: String::new(),
            synth_start: "2024-01-01T00:00:00Z".into(),
            synth_train_days: 28,
            synth_test_days: 7,
            timezone: "UTC".into(),
            source_mode: SourceMode::All,
            record_timings: false,
            units: lstm.units,
            lookback: lstm.lookback,
            epochs: lstm.epochs,
            batch_size: lstm.batch_size,
            learning_rate: lstm.learning_rate,
            fine_tune_epochs: lstm.fine_tune_epochs,
            val_fraction: lstm.val_fraction,
            windows_per_epoch: lstm.windows_per_epoch,
            val_windows: lstm.val_windows,
            range_min: outlier.range_min,
            range_max: outlier.range_max,
            rate_limit: outlier.rate_limit,
            contamination: events.contamination,
            delta_window: events.delta_window,
            refractory: events.refractory,
            n_trees: events.n_trees,
            subsample: events.subsample,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    /// Loads `path` (or the defaults when `None`), applies `key=value`
    /// overrides in order and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                parse_table(&text)?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            table.insert(key.trim().to_string(), parse_value(value.trim()));
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        if let Some((key, _)) = table.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Config(format!("`{key}`: nested tables are not allowed")));
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.lstm().validate().map_err(wrap)?;
        self.outlier().validate().map_err(wrap)?;
        self.events(0).validate().map_err(wrap)?;
        self.utc_offset_seconds()?;
        if self.uses_synth() {
            parse_timestamp(&self.synth_start).map_err(wrap)?;
            if self.synth_train_days == 0 || self.synth_test_days == 0 {
                return Err(Error::Config("synth_train_days and synth_test_days must be positive".into()));
            }
        } else if self.split_time.is_empty() {
            return Err(Error::Config("split_time is required with input_dir".into()));
        }
        if !self.split_time.is_empty() {
            parse_timestamp(&self.split_time).map_err(wrap)?;
        }
        Ok(())
    }

    pub fn uses_synth(&self) -> bool {
        self.input_dir.as_os_str().is_empty()
    }

    pub fn lstm(&self) -> LstmConfig {
        LstmConfig {
            units: self.units,
            lookback: self.lookback,
            n_features: N_FEATURES,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            fine_tune_epochs: self.fine_tune_epochs,
            seed: self.seed,
            val_fraction: self.val_fraction,
            windows_per_epoch: self.windows_per_epoch,
            val_windows: self.val_windows,
        }
    }

    pub fn outlier(&self) -> OutlierConfig {
        OutlierConfig {
            range_min: self.range_min,
            range_max: self.range_max,
            rate_limit: self.rate_limit,
        }
    }

    /// Event settings for the household at `index`; its forest seed is
    /// `seed + index`.
    pub fn events(&self, index: usize) -> EventConfig {
        EventConfig {
            contamination: self.contamination,
            delta_window: self.delta_window,
            refractory: self.refractory,
            n_trees: self.n_trees,
            subsample: self.subsample,
            seed: self.seed + index as u64,
        }
    }

    pub fn synth_start_ts(&self) -> Result<i64> {
        parse_timestamp(&self.synth_start)
    }

    /// Explicit `split_time`, or the end of the synthetic training days.
    pub fn split_ts(&self) -> Result<i64> {
        if !self.split_time.is_empty() {
            return parse_timestamp(&self.split_time);
        }
        Ok(self.synth_start_ts()? + i64::from(self.synth_train_days) * 86_400)
    }

    pub fn utc_offset_seconds(&self) -> Result<i32> {
        parse_utc_offset(&self.timezone)
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(e.message().to_string()))
}

/// Override values use TOML syntax; anything that does not parse as a TOML
/// value is taken as a bare string.
fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

pub fn parse_utc_offset(text: &str) -> Result<i32> {
    let bad = || Error::Config(format!("timezone `{text}` is not UTC or ±HH:MM"));
    let t = text.trim();
    if t.eq_ignore_ascii_case("utc") || t == "Z" {
        return Ok(0);
    }
    let (sign, rest) = match t.as_bytes().first() {
        Some(b'+') => (1, &t[1..]),
        Some(b'-') => (-1, &t[1..]),
        _ => return Err(bad()),
    };
    let (h, m) = rest.split_once(':').ok_or_else(bad)?;
    let h: i32 = h.parse().map_err(|_| bad())?;
    let m: i32 = m.parse().map_err(|_| bad())?;
    if h > 14 || m > 59 {
        return Err(bad());
    }
    Ok(sign * (h * 3600 + m * 60))
}
