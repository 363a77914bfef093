//! Deterministic synthetic households.
//!
//! A single well-mixed tank temperature follows a thermostat cycle: it cools
//! at `cool_rate` while idle, and once it reaches `heat_on_threshold` the heat
//! pump raises it at `heat_rate` until `heat_off_threshold`. A shower draws an
//! extra `drop_rate` per minute and pauses any heating until it ends.
//! Measurement noise is added on top and never feeds back into the state.

use chrono::{DateTime, Datelike};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::timeseries::RegularSeries;

const MINUTES_PER_DAY: i64 = 1440;
const MAX_JITTER_MINUTES: f64 = 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShowerSpec {
    /// 0 = Monday.
    pub day_of_week: u8,
    pub start_minute_of_day: u16,
    pub duration_min: u16,
    /// °C per minute withdrawn while the shower runs.
    pub drop_rate: f64,
}

impl ShowerSpec {
    pub fn new(day_of_week: u8, hour: u16, minute: u16, duration_min: u16, drop_rate: f64) -> Self {
        Self {
            day_of_week,
            start_minute_of_day: hour * 60 + minute,
            duration_min,
            drop_rate,
        }
    }

    /// The same shower on every day of the week.
    pub fn daily(hour: u16, minute: u16, duration_min: u16, drop_rate: f64) -> Vec<Self> {
        (0..7).map(|d| Self::new(d, hour, minute, duration_min, drop_rate)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.day_of_week > 6 {
            return Err(Error::InvalidProfile(format!("day_of_week {} > 6", self.day_of_week)));
        }
        if self.start_minute_of_day >= 1440 {
            return Err(Error::InvalidProfile(format!(
                "start_minute_of_day {} >= 1440",
                self.start_minute_of_day
            )));
        }
        if self.duration_min == 0 {
            return Err(Error::InvalidProfile("shower duration must be at least 1 minute".into()));
        }
        if !(self.drop_rate.is_finite() && self.drop_rate > 0.0) {
            return Err(Error::InvalidProfile("shower drop_rate must be positive".into()));
        }
        Ok(())
    }

    /// Parses `"<day> HH:MM <duration_min> <drop_rate>"`, where `<day>` is
    /// `mon`..`sun`, `daily`, `weekdays` or `weekends`.
    pub fn parse_line(line: &str) -> Result<Vec<Self>> {
        let bad = |msg: &str| Error::InvalidProfile(format!("shower `{line}`: {msg}"));
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [day, time, duration, rate] = parts[..] else {
            return Err(bad("expected `<day> HH:MM <minutes> <drop_rate>`"));
        };
        let days: Vec<u8> = match day.to_ascii_lowercase().as_str() {
            "daily" => (0..7).collect(),
            "weekdays" => (0..5).collect(),
            "weekends" => vec![5, 6],
            other => {
                let names = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];
                let d = names.iter().position(|n| *n == other).ok_or_else(|| bad("unknown day"))?;
                vec![d as u8]
            }
        };
        let (h, m) = time.split_once(':').ok_or_else(|| bad("time must be HH:MM"))?;
        let hour: u16 = h.parse().map_err(|_| bad("bad hour"))?;
        let minute: u16 = m.parse().map_err(|_| bad("bad minute"))?;
        if hour > 23 || minute > 59 {
            return Err(bad("time out of range"));
        }
        let duration: u16 = duration.parse().map_err(|_| bad("bad duration"))?;
        let rate: f64 = rate.parse().map_err(|_| bad("bad drop rate"))?;
        let specs: Vec<Self> = days.into_iter().map(|d| Self::new(d, hour, minute, duration, rate)).collect();
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdProfile {
    pub name: String,
    pub base_temp: f64,
    pub heat_on_threshold: f64,
    pub heat_off_threshold: f64,
    pub heat_rate: f64,
    pub cool_rate: f64,
    pub showers: Vec<ShowerSpec>,
    pub noise_sigma: f64,
    /// Probability that a scheduled shower is perturbed (skipped or shifted).
    pub irregularity: f64,
}

impl HouseholdProfile {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.base_temp,
            self.heat_on_threshold,
            self.heat_off_threshold,
            self.heat_rate,
            self.cool_rate,
            self.noise_sigma,
            self.irregularity,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(format!("{}: non-finite parameter", self.name)));
        }
        if self.heat_off_threshold <= self.heat_on_threshold {
            return Err(Error::InvalidProfile(format!(
                "{}: heat_off_threshold must exceed heat_on_threshold",
                self.name
            )));
        }
        if self.heat_rate <= 0.0 || self.cool_rate <= 0.0 {
            return Err(Error::InvalidProfile(format!("{}: rates must be positive", self.name)));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidProfile(format!("{}: noise_sigma must be >= 0", self.name)));
        }
        if !(0.0..=1.0).contains(&self.irregularity) {
            return Err(Error::InvalidProfile(format!("{}: irregularity must lie in [0, 1]", self.name)));
        }
        self.showers.iter().try_for_each(ShowerSpec::validate)
    }

    /// Reads a profile from a flat key-value (TOML) file.
    ///
    /// ```toml
    /// name = "cabin"
    /// base_temp = 50.0
    /// heat_on_threshold = 44.0
    /// heat_off_threshold = 54.0
    /// heat_rate = 0.3
    /// cool_rate = 0.01
    /// noise_sigma = 0.1
    /// irregularity = 0.2
    /// showers = ["daily 07:00 15 0.5", "sat 10:30 20 0.4"]
    /// ```
    pub fn from_kv(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Flat {
            name: String,
            base_temp: f64,
            heat_on_threshold: f64,
            heat_off_threshold: f64,
            heat_rate: f64,
            cool_rate: f64,
            noise_sigma: f64,
            irregularity: f64,
            #[serde(default)]
            showers: Vec<String>,
        }
        let flat: Flat = toml::from_str(text).map_err(|e| Error::InvalidProfile(e.to_string()))?;
        let mut showers = Vec::new();
        for line in &flat.showers {
            showers.extend(ShowerSpec::parse_line(line)?);
        }
        let profile = Self {
            name: flat.name,
            base_temp: flat.base_temp,
            heat_on_threshold: flat.heat_on_threshold,
            heat_off_threshold: flat.heat_off_threshold,
            heat_rate: flat.heat_rate,
            cool_rate: flat.cool_rate,
            showers,
            noise_sigma: flat.noise_sigma,
            irregularity: flat.irregularity,
        };
        profile.validate()?;
        Ok(profile)
    }
}

fn weekday_of(ts: i64) -> u8 {
    DateTime::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .weekday()
        .num_days_from_monday() as u8
}

/// A shower as it actually happened in a generated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedShower {
    /// UTC seconds; may precede the series start for showers crossing the edge.
    pub onset: i64,
    pub duration_min: u16,
    pub drop_rate: f64,
}

/// Showers realised by [`generate_household`] for the same arguments, in
/// schedule order, restricted to those overlapping the generated span.
pub fn planted_showers(profile: &HouseholdProfile, start: i64, days: u32, seed: u64) -> Vec<PlantedShower> {
    let end = start + i64::from(days) * MINUTES_PER_DAY * 60;
    let mut out = Vec::new();
    let mut rng = rng::stream(seed, streams::SYNTH_EVENTS);
    // One day of margin on either side lets jittered showers cross the edges.
    let mut midnight = start.div_euclid(86_400) * 86_400 - 86_400;
    while midnight <= end + 86_400 {
        let weekday = weekday_of(midnight);
        for spec in profile.showers.iter().filter(|s| s.day_of_week == weekday) {
            // Three draws per scheduled shower keep the stream aligned regardless of outcome.
            let (perturb, skip, shift) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let mut onset = midnight + i64::from(spec.start_minute_of_day) * 60;
            if perturb < profile.irregularity {
                if skip < 0.5 {
                    continue;
                }
                onset += (((2.0 * shift - 1.0) * MAX_JITTER_MINUTES).round() as i64) * 60;
            }
            let finish = onset + i64::from(spec.duration_min) * 60;
            if finish > start && onset < end {
                out.push(PlantedShower {
                    onset,
                    duration_min: spec.duration_min,
                    drop_rate: spec.drop_rate,
                });
            }
        }
        midnight += MINUTES_PER_DAY * 60;
    }
    out
}

/// Realised shower draw rate (°C/min) for every minute of the output.
fn realise_showers(profile: &HouseholdProfile, start: i64, days: u32, seed: u64) -> Vec<f64> {
    let minutes = days as usize * MINUTES_PER_DAY as usize;
    let mut draw = vec![0.0; minutes];
    for shower in planted_showers(profile, start, days, seed) {
        let first = (shower.onset - start).div_euclid(60);
        for m in first..first + i64::from(shower.duration_min) {
            if (0..minutes as i64).contains(&m) {
                draw[m as usize] += shower.drop_rate;
            }
        }
    }
    draw
}

/// Simulates `days` days of one-minute mid-tank readings starting at `start`.
pub fn generate_household(profile: &HouseholdProfile, start: i64, days: u32, seed: u64) -> Result<RegularSeries> {
    profile.validate()?;
    if days == 0 {
        return Err(Error::InvalidArgument("days must be at least 1".into()));
    }
    let minutes = days as usize * MINUTES_PER_DAY as usize;
    let draw = realise_showers(profile, start, days, seed);
    let mut noise = rng::stream(seed, streams::SYNTH_NOISE);

    let mut temp = profile.base_temp;
    let mut heating = temp <= profile.heat_on_threshold;
    let mut values = Vec::with_capacity(minutes);
    for &shower in &draw {
        let eps = rng::standard_normal(&mut noise);
        values.push(temp + profile.noise_sigma * eps);

        if shower > 0.0 {
            temp -= profile.cool_rate + shower;
            if temp <= profile.heat_on_threshold {
                heating = true;
            }
        } else if heating {
            temp = (temp + profile.heat_rate).min(profile.heat_off_threshold);
            if temp >= profile.heat_off_threshold {
                heating = false;
            }
        } else if temp - profile.cool_rate <= profile.heat_on_threshold {
            temp = profile.heat_on_threshold;
            heating = true;
        } else {
            temp -= profile.cool_rate;
        }
    }
    RegularSeries::new(profile.name.clone(), start, 60, values)
}

/// Six reference households with deliberately different usage character.
///
/// 1. erratic: many showers, heavy jitter, noisy sensor
/// 2. weekend-heavy
/// 3. late-evening
/// 4. long low-rate draws (sustained plateaus)
/// 5. clockwork: 07:00 and 20:00 every day, no jitter
/// 6. early-evening
pub fn default_profiles() -> Vec<HouseholdProfile> {
    let base = |name: &str| HouseholdProfile {
        name: name.to_string(),
        base_temp: 50.0,
        heat_on_threshold: 44.0,
        heat_off_threshold: 54.0,
        heat_rate: 0.3,
        cool_rate: 0.01,
        showers: Vec::new(),
        noise_sigma: 0.1,
        irregularity: 0.15,
    };
    let showers = |lines: &[&str]| -> Vec<ShowerSpec> {
        lines
            .iter()
            .flat_map(|l| ShowerSpec::parse_line(l).expect("built-in shower spec"))
            .collect()
    };

    vec![
        HouseholdProfile {
            showers: showers(&[
                "daily 06:40 12 0.6",
                "daily 19:30 10 0.5",
                "weekends 11:00 20 0.45",
                "wed 22:00 8 0.7",
                "fri 15:00 6 0.8",
                "tue 13:00 10 0.6",
            ]),
            noise_sigma: 0.35,
            irregularity: 0.6,
            heat_on_threshold: 42.0,
            heat_off_threshold: 55.0,
            cool_rate: 0.012,
            ..base("hh1")
        },
        HouseholdProfile {
            showers: showers(&[
                "weekdays 06:30 10 0.5",
                "weekends 09:00 20 0.5",
                "weekends 11:30 10 0.4",
                "weekends 19:00 15 0.5",
            ]),
            ..base("hh2")
        },
        HouseholdProfile {
            showers: showers(&["daily 22:30 15 0.5", "mon 23:15 10 0.4", "wed 23:15 10 0.4", "fri 23:15 10 0.4", "daily 07:30 5 0.4"]),
            ..base("hh3")
        },
        HouseholdProfile {
            showers: showers(&["daily 08:00 90 0.08", "daily 18:00 120 0.06"]),
            heat_on_threshold: 46.0,
            heat_off_threshold: 53.0,
            noise_sigma: 0.08,
            irregularity: 0.1,
            ..base("hh4")
        },
        HouseholdProfile {
            showers: showers(&["daily 07:00 15 0.5", "daily 20:00 15 0.5"]),
            irregularity: 0.0,
            ..base("hh5")
        },
        HouseholdProfile {
            showers: showers(&["daily 18:30 15 0.5", "tue 19:15 10 0.4", "thu 19:15 10 0.4", "sat 19:15 10 0.4"]),
            ..base("hh6")
        },
    ]
}
