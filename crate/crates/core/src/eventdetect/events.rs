use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::forest::{ForestConfig, IsolationForest};
use crate::error::{Error, Result};
use crate::timeseries::{format_timestamp, RegularSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventConfig {
    /// Fraction of minutes treated as anomalous.
    pub contamination: f64,
    /// Minutes spanned by the windowed delta.
    pub delta_window: usize,
    /// Events separated by less than this many minutes are merged.
    pub refractory: usize,
    pub n_trees: usize,
    pub subsample: usize,
    pub seed: u64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            contamination: 0.02,
            delta_window: 5,
            refractory: 30,
            n_trees: 100,
            subsample: 256,
            seed: 42,
        }
    }
}

impl EventConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contamination > 0.0 && self.contamination < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "contamination must lie in (0, 1), got {}",
                self.contamination
            )));
        }
        if self.delta_window == 0 {
            return Err(Error::InvalidArgument("delta_window must be at least 1".into()));
        }
        if self.n_trees == 0 || self.subsample < 2 {
            return Err(Error::InvalidArgument("need n_trees >= 1 and subsample >= 2".into()));
        }
        Ok(())
    }

    fn forest(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            subsample: self.subsample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// UTC seconds of the first anomalous minute.
    pub start: i64,
    pub duration_min: u32,
    /// Most negative windowed delta inside the event, °C.
    pub peak_drop: f64,
    pub anomaly_score: f64,
}

/// `[v(t) - v(t-1), v(t) - v(t-w)]` for every `t >= w`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaFeatures {
    pub rows: Array2<f64>,
    /// Timestamp of each row.
    pub times: Vec<i64>,
    pub step_seconds: u32,
}

impl DeltaFeatures {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn extract_features(series: &RegularSeries, delta_window: usize) -> Result<DeltaFeatures> {
    if delta_window == 0 {
        return Err(Error::InvalidArgument("delta_window must be at least 1".into()));
    }
    let v = series.values();
    if v.len() <= delta_window {
        return Err(Error::SeriesTooShort {
            len: v.len(),
            need: delta_window,
        });
    }
    let n = v.len() - delta_window;
    let rows = Array2::from_shape_fn((n, 2), |(i, j)| {
        let t = i + delta_window;
        match j {
            0 => v[t] - v[t - 1],
            _ => v[t] - v[t - delta_window],
        }
    });
    let times = (delta_window..v.len()).map(|t| series.timestamp(t)).collect();
    Ok(DeltaFeatures {
        rows,
        times,
        step_seconds: series.step_seconds(),
    })
}

/// Anomaly scores per feature row plus the rows selected by the quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteScores {
    pub features: DeltaFeatures,
    pub scores: Vec<f64>,
    /// Rows in the top `floor(contamination * N)` scores (earlier rows win
    /// ties) that also have a negative windowed delta, in time order.
    pub candidates: Vec<usize>,
}

/// Scores every minute. A series whose feature rows are all identical has
/// nothing to isolate and yields zero scores and no candidates.
pub fn score_minutes(series: &RegularSeries, config: &EventConfig) -> Result<MinuteScores> {
    config.validate()?;
    let features = extract_features(series, config.delta_window)?;
    let n = features.len();
    let scores = match IsolationForest::fit(features.rows.view(), &config.forest(), config.seed) {
        Ok(forest) => forest.score_all(features.rows.view())?,
        Err(Error::IdenticalPoints) => {
            return Ok(MinuteScores {
                scores: vec![0.0; n],
                features,
                candidates: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };

    let k = (config.contamination * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut candidates: Vec<usize> = order[..k]
        .iter()
        .copied()
        .filter(|&i| features.rows[[i, 1]] < 0.0)
        .collect();
    candidates.sort_unstable();
    Ok(MinuteScores {
        features,
        scores,
        candidates,
    })
}

/// Runs of consecutive candidates, then runs closer than `refractory`
/// minutes, become single events.
pub fn detect_events(series: &RegularSeries, config: &EventConfig) -> Result<Vec<Event>> {
    let scored = score_minutes(series, config)?;
    let step = i64::from(scored.features.step_seconds);
    let refractory = config.refractory as i64 * 60;

    // (first row, last row) of each merged group
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for &i in &scored.candidates {
        match groups.last_mut() {
            Some((_, last)) if i == *last + 1 => *last = i,
            Some((_, last)) if (scored.features.times[i] - scored.features.times[*last] - step) < refractory => *last = i,
            _ => groups.push((i, i)),
        }
    }

    let rows = &scored.features.rows;
    Ok(groups
        .into_iter()
        .map(|(first, last)| {
            let members = scored.candidates.iter().filter(|&&i| i >= first && i <= last);
            let (peak_drop, anomaly_score) = members.fold((f64::INFINITY, 0.0f64), |(drop, score), &i| {
                (drop.min(rows[[i, 1]]), score.max(scored.scores[i]))
            });
            let start = scored.features.times[first];
            let end = scored.features.times[last] + step;
            Event {
                start,
                duration_min: ((end - start) / 60).max(1) as u32,
                peak_drop,
                anomaly_score,
            }
        })
        .collect())
}

/// `household,start_iso8601,duration_min,peak_drop_c,score`
pub fn events_to_csv(rows: &[(String, Event)]) -> String {
    let mut out = String::from("household,start_iso8601,duration_min,peak_drop_c,score\n");
    for (household, e) in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            household,
            format_timestamp(e.start),
            e.duration_min,
            e.peak_drop,
            e.anomaly_score
        )
        .expect("writing to a String");
    }
    out
}
