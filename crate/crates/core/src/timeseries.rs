//! Sensor series ingestion and cleaning.
//!
//! Raw tank recordings are change-driven: a row is written only when the
//! reading moves, so timestamps are irregular. Everything downstream works on
//! a [`RegularSeries`], a gap-free grid produced by forward-filling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEP_SECONDS: u32 = 60;

/// Irregular observations of the mid-tank temperature, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    household_id: String,
    records: Vec<(i64, f64)>,
}

impl RawSeries {
    /// Builds a raw series from unordered records. Duplicate timestamps keep
    /// the value that appears last in `records`.
    pub fn from_records(household_id: impl Into<String>, records: Vec<(i64, f64)>) -> Result<Self> {
        let mut by_time = BTreeMap::new();
        for (i, (ts, v)) in records.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i + 1 });
            }
            by_time.insert(ts, v);
        }
        Ok(Self {
            household_id: household_id.into(),
            records: by_time.into_iter().collect(),
        })
    }

    pub fn household_id(&self) -> &str {
        &self.household_id
    }

    pub fn records(&self) -> &[(i64, f64)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Gap-free series on a fixed grid: `values[i]` is observed at `start + i * step_seconds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularSeries {
    household_id: String,
    start: i64,
    step_seconds: u32,
    values: Vec<f64>,
}

impl RegularSeries {
    pub fn new(
        household_id: impl Into<String>,
        start: i64,
        step_seconds: u32,
        values: Vec<f64>,
    ) -> Result<Self> {
        if step_seconds == 0 {
            return Err(Error::InvalidArgument("step_seconds must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::Empty("regular series needs at least one value".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i });
        }
        Ok(Self {
            household_id: household_id.into(),
            start,
            step_seconds,
            values,
        })
    }

    pub fn household_id(&self) -> &str {
        &self.household_id
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn step_seconds(&self) -> u32 {
        self.step_seconds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start + index as i64 * i64::from(self.step_seconds)
    }

    /// Timestamp of the last grid point.
    pub fn end(&self) -> i64 {
        self.timestamp(self.values.len() - 1)
    }

    pub fn with_household_id(mut self, id: impl Into<String>) -> Self {
        self.household_id = id.into();
        self
    }

    /// Sub-series `[from, to)` by index. Panics on an empty or out-of-bounds range.
    pub fn slice(&self, from: usize, to: usize) -> RegularSeries {
        assert!(from < to && to <= self.values.len(), "invalid slice {from}..{to}");
        RegularSeries {
            household_id: self.household_id.clone(),
            start: self.timestamp(from),
            step_seconds: self.step_seconds,
            values: self.values[from..to].to_vec(),
        }
    }

    /// Writes the series as `timestamp,t_mid` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 32 + 16);
        out.push_str("timestamp,t_mid\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", format_timestamp(self.timestamp(i)), v);
        }
        out
    }
}

/// Reasons a grid value can be rejected by [`remove_outliers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierReason {
    Range,
    Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedPoint {
    pub index: usize,
    pub value: f64,
    pub reason: OutlierReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub removed: Vec<RemovedPoint>,
}

impl OutlierReport {
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }
}

/// Physical plausibility rules for tank temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    pub range_min: f64,
    pub range_max: f64,
    /// Largest accepted change, in °C per minute.
    pub rate_limit: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            range_min: 5.0,
            range_max: 95.0,
            rate_limit: 20.0,
        }
    }
}

impl OutlierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_min.is_finite() && self.range_max.is_finite() && self.range_min < self.range_max) {
            return Err(Error::InvalidArgument(format!(
                "outlier range [{}, {}] is empty",
                self.range_min, self.range_max
            )));
        }
        if !(self.rate_limit.is_finite() && self.rate_limit > 0.0) {
            return Err(Error::InvalidArgument("rate_limit must be positive".into()));
        }
        Ok(())
    }
}

pub fn parse_timestamp(text: &str) -> Result<i64> {
    DateTime::parse_from_rfc3339(text.trim())
        .map(|dt| dt.timestamp())
        .map_err(|e| Error::InvalidArgument(format!("bad timestamp `{text}`: {e}")))
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .expect("timestamp in chrono range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses `timestamp,t_mid` CSV. Row numbers in errors are 1-based file lines.
pub fn parse_series(text: &str, household_id: &str) -> Result<RawSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "t_mid" {
        return Err(Error::Parse {
            row: 1,
            msg: format!("expected header `timestamp,t_mid`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut records = Vec::new();
    for result in reader.records() {
        let record = result?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::Parse {
                row,
                msg: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        let value: f64 = record[1].parse().map_err(|_| Error::Parse {
            row,
            msg: format!("bad temperature `{}`", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite { row });
        }
        records.push((ts, value));
    }
    if records.is_empty() {
        return Err(Error::Empty(format!("no data rows for household `{household_id}`")));
    }
    RawSeries::from_records(household_id, records)
}

fn ceil_to_grid(ts: i64, step: i64) -> i64 {
    ts.div_euclid(step) * step + if ts.rem_euclid(step) == 0 { 0 } else { step }
}

/// Forward-fills change-driven observations onto a uniform grid.
///
/// Both ends of the span are rounded up to a whole step, so the grid covers
/// `[ceil(first), ceil(last)]`. Grid point `g` takes the last observation at
/// or before `g`.
pub fn forward_fill_resample(raw: &RawSeries, step_seconds: u32) -> Result<RegularSeries> {
    if step_seconds == 0 {
        return Err(Error::InvalidArgument("step_seconds must be positive".into()));
    }
    let records = raw.records();
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(Error::Empty("cannot resample an empty raw series".into())),
    };
    let step = i64::from(step_seconds);
    let start = ceil_to_grid(first, step);
    let end = ceil_to_grid(last, step);
    let n = ((end - start) / step) as usize + 1;

    let mut values = Vec::with_capacity(n);
    let mut cursor = 0;
    for i in 0..n {
        let g = start + i as i64 * step;
        while cursor + 1 < records.len() && records[cursor + 1].0 <= g {
            cursor += 1;
        }
        values.push(records[cursor].1);
    }
    RegularSeries::new(raw.household_id(), start, step_seconds, values)
}

/// Rejects values outside the physical range or changing faster than the
/// rate limit, then refills them from the preceding accepted value.
///
/// The rate rule compares against the last *accepted* value, which keeps the
/// cleaned output within the limit. Leading rejected points (no accepted
/// predecessor) are filled with the first accepted value.
pub fn remove_outliers(series: &RegularSeries, cfg: &OutlierConfig) -> Result<(RegularSeries, OutlierReport)> {
    cfg.validate()?;
    let max_step_delta = cfg.rate_limit * f64::from(series.step_seconds()) / 60.0;
    let mut report = OutlierReport::default();
    let mut cleaned: Vec<Option<f64>> = Vec::with_capacity(series.len());
    let mut last_kept: Option<f64> = None;

    for (index, &value) in series.values().iter().enumerate() {
        let reason = if value < cfg.range_min || value > cfg.range_max {
            Some(OutlierReason::Range)
        } else if last_kept.is_some_and(|prev| (value - prev).abs() > max_step_delta) {
            Some(OutlierReason::Rate)
        } else {
            None
        };
        match reason {
            Some(reason) => {
                report.removed.push(RemovedPoint { index, value, reason });
                cleaned.push(last_kept);
            }
            None => {
                last_kept = Some(value);
                cleaned.push(Some(value));
            }
        }
    }

    let first_kept = cleaned.iter().flatten().next().copied().ok_or(Error::AllValuesRemoved)?;
    let values = cleaned.into_iter().map(|v| v.unwrap_or(first_kept)).collect();
    let out = RegularSeries::new(series.household_id(), series.start(), series.step_seconds(), values)?;
    Ok((out, report))
}

/// Splits at `split_time`: train holds points strictly before it, test the rest.
pub fn split_train_test(series: &RegularSeries, split_time: i64) -> Result<(RegularSeries, RegularSeries)> {
    let (start, end) = (series.start(), series.end());
    if split_time <= start || split_time > end {
        return Err(Error::SplitOutOfRange {
            split: split_time,
            start,
            end,
        });
    }
    let step = i64::from(series.step_seconds());
    let offset = split_time - start;
    let index = (offset / step + i64::from(offset % step != 0)) as usize;
    Ok((series.slice(0, index), series.slice(index, series.len())))
}
