//! Weekly demand calendars: events binned by local day of week and hour.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventdetect::Event;

pub const DAYS: usize = 7;
pub const HOURS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeeklyCalendar {
    pub household_id: String,
    /// Half-open `[start, end)` in UTC seconds.
    pub period_start: i64,
    pub period_end: i64,
    /// Offset of the local clock from UTC used for binning.
    pub utc_offset_seconds: i32,
    pub contamination: f64,
    /// `counts[day][hour]`, day 0 = Monday.
    pub counts: Vec<Vec<u32>>,
}

impl WeeklyCalendar {
    pub fn empty(household_id: impl Into<String>, period: (i64, i64), utc_offset_seconds: i32, contamination: f64) -> Self {
        Self {
            household_id: household_id.into(),
            period_start: period.0,
            period_end: period.1,
            utc_offset_seconds,
            contamination,
            counts: vec![vec![0; HOURS]; DAYS],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| u64::from(c)).sum()
    }

    fn check(&self) -> Result<()> {
        if self.counts.len() != DAYS || self.counts.iter().any(|row| row.len() != HOURS) {
            return Err(Error::Shape("calendar must be 7 x 24".into()));
        }
        if self.period_end < self.period_start {
            return Err(Error::InvalidArgument("calendar period ends before it starts".into()));
        }
        Ok(())
    }
}

/// Local `(day of week, hour)` of a UTC timestamp, Monday = 0.
pub fn local_bin(ts: i64, utc_offset_seconds: i32) -> (usize, usize) {
    let local = ts + i64::from(utc_offset_seconds);
    // 1970-01-01 was a Thursday.
    let day = (local.div_euclid(86_400) + 3).rem_euclid(7) as usize;
    let hour = (local.rem_euclid(86_400) / 3600) as usize;
    (day, hour)
}

pub fn build_calendar(
    household_id: &str,
    events: &[Event],
    period: (i64, i64),
    utc_offset_seconds: i32,
    contamination: f64,
) -> Result<WeeklyCalendar> {
    let mut cal = WeeklyCalendar::empty(household_id, period, utc_offset_seconds, contamination);
    cal.check()?;
    for e in events {
        if e.start < period.0 || e.start >= period.1 {
            return Err(Error::EventOutsidePeriod {
                start: e.start,
                period_start: period.0,
                period_end: period.1,
            });
        }
        let (day, hour) = local_bin(e.start, utc_offset_seconds);
        cal.counts[day][hour] += 1;
    }
    Ok(cal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalendarFormat {
    Csv,
    Json,
}

impl FromStr for CalendarFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

/// CSV is `day,hour,count` for all 168 bins; JSON is the whole object.
pub fn emit_calendar(cal: &WeeklyCalendar, format: CalendarFormat) -> Result<Vec<u8>> {
    cal.check()?;
    match format {
        CalendarFormat::Csv => {
            let mut out = String::from("day,hour,count\n");
            for (day, row) in cal.counts.iter().enumerate() {
                for (hour, count) in row.iter().enumerate() {
                    writeln!(out, "{day},{hour},{count}").expect("writing to a String");
                }
            }
            Ok(out.into_bytes())
        }
        CalendarFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(cal)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

pub fn parse_calendar_json(text: &str) -> Result<WeeklyCalendar> {
    let cal: WeeklyCalendar = serde_json::from_str(text)?;
    cal.check()?;
    Ok(cal)
}

/// Top `k` bins by count, ties broken by earlier `(day, hour)`. Empty bins
/// are included only when fewer than `k` bins are non-empty.
pub fn peak_bins(cal: &WeeklyCalendar, k: usize) -> Result<Vec<(usize, usize, u32)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    cal.check()?;
    let mut bins: Vec<(usize, usize, u32)> = cal
        .counts
        .iter()
        .enumerate()
        .flat_map(|(d, row)| row.iter().enumerate().map(move |(h, &c)| (d, h, c)))
        .collect();
    // Stable sort keeps (day, hour) order among equal counts.
    bins.sort_by(|a, b| b.2.cmp(&a.2));
    bins.truncate(k);
    Ok(bins)
}
