//! Stage orchestration behind the command-line tool.
//!
//! Layout under `out_dir`:
//!
//! ```text
//! synth/<id>.csv                        raw synthetic recordings
//! preprocess/<id>_train.csv, _test.csv  cleaned and split series
//! preprocess/households.json            household ids in matrix order
//! preprocess/outliers.json              removed points per household
//! matrix/transfer_matrix.csv            source,target,mape,rmse,r2,epochs,seconds
//! matrix/timing.json                    TimingReport
//! matrix/selection.json                 selected source and row means
//! matrix/checkpoints/<src>__<tgt>.json  pretrained (src = tgt) and fine-tuned models
//! calendar/events.csv                   events of every target
//! calendar/<id>_events.csv, <id>_calendar.csv, <id>_calendar.json
//! run_report.json                       written by `all`
//! ```
//!
//! Each stage directory carries a `.stamp` holding a hash of the config, the
//! stage name and the upstream stamp. A stage whose stamp matches is skipped
//! unless forced. Stages are built in `.<stage>.partial` and renamed into
//! place only on success.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::calendar::{build_calendar, emit_calendar, CalendarFormat};
use crate::config::{hex_digest, PipelineConfig, SourceMode};
use crate::error::{Error, Result};
use crate::eventdetect::{detect_events, events_to_csv, Event};
use crate::neuralnet::{load_model, predict_series, save_model};
use crate::synthgen::{default_profiles, generate_household};
use crate::timeseries::{
    forward_fill_resample, parse_series, remove_outliers, split_train_test, RegularSeries, DEFAULT_STEP_SECONDS,
};
use crate::transfer::{pick_random_source, run_transfer_matrix, run_transfer_row, select_source, HouseholdData};

pub const STAGES: [&str; 4] = ["synth", "preprocess", "matrix", "calendar"];
const STAMP: &str = ".stamp";

#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub jobs: usize,
    pub force: bool,
}

impl Context {
    pub fn new(config: PipelineConfig, jobs: usize, force: bool) -> Self {
        Self {
            config,
            jobs: jobs.max(1),
            force,
        }
    }

    fn out(&self) -> &Path {
        &self.config.out_dir
    }

    fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out().join(stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: String,
    pub skipped: bool,
    pub seconds: f64,
    /// Files written by the stage, relative to `out_dir`.
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub households: Vec<String>,
    pub sources: Vec<String>,
    pub cells: usize,
    pub selected_source: String,
    pub epoch_saving: f64,
    /// Wall-clock saving when each source is the one pretrained household.
    pub wall_clock_saving: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub stages: Vec<StageOutcome>,
    pub matrix: MatrixSummary,
    pub calendars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Selection {
    mode: SourceMode,
    selected: String,
    mean_rmse: BTreeMap<String, f64>,
    mean_mape: BTreeMap<String, f64>,
}

fn read_stamp(dir: &Path) -> Option<String> {
    fs::read_to_string(dir.join(STAMP)).ok().map(|s| s.trim().to_string())
}

fn upstream_stamp(ctx: &Context, stage: &str, needed_by: &str) -> Result<String> {
    read_stamp(&ctx.stage_dir(stage))
        .ok_or_else(|| Error::Config(format!("`{needed_by}` needs the output of `{stage}`; run it first")))
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else if e.file_name() != STAMP {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

/// Runs `body` into a fresh partial directory and swaps it into place.
fn run_stage(ctx: &Context, stage: &str, upstream: &str, body: impl FnOnce(&Path) -> Result<()>) -> Result<StageOutcome> {
    let key = hex_digest(format!("{}\n{stage}\n{upstream}", ctx.config.hash()).as_bytes());
    let dir = ctx.stage_dir(stage);
    let started = Instant::now();
    let skipped = !ctx.force && read_stamp(&dir).as_deref() == Some(key.as_str());
    if skipped {
        info!("{stage}: up to date, skipping");
    } else {
        info!("{stage}: running");
        fs::create_dir_all(ctx.out())?;
        let partial = ctx.out().join(format!(".{stage}.partial"));
        if partial.exists() {
            fs::remove_dir_all(&partial)?;
        }
        fs::create_dir_all(&partial)?;
        if let Err(e) = body(&partial).and_then(|()| Ok(fs::write(partial.join(STAMP), &key)?)) {
            let _ = fs::remove_dir_all(&partial);
            return Err(e);
        }
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&partial, &dir)?;
    }
    let mut artifacts = Vec::new();
    list_files(ctx.out(), &dir, &mut artifacts)?;
    Ok(StageOutcome {
        stage: stage.to_string(),
        skipped,
        seconds: started.elapsed().as_secs_f64(),
        artifacts,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_regular(path: &Path, id: &str) -> Result<RegularSeries> {
    let raw = parse_series(&fs::read_to_string(path)?, id)?;
    forward_fill_resample(&raw, DEFAULT_STEP_SECONDS)
}

/// Writes one CSV per built-in profile.
pub fn cmd_synth(ctx: &Context) -> Result<StageOutcome> {
    if !ctx.config.uses_synth() {
        return Err(Error::Config("synth is disabled when input_dir is set".into()));
    }
    let cfg = &ctx.config;
    run_stage(ctx, "synth", "", |dir| {
        let start = cfg.synth_start_ts()?;
        let days = cfg.synth_train_days + cfg.synth_test_days;
        for (i, profile) in default_profiles().iter().enumerate() {
            let series = generate_household(profile, start, days, cfg.seed + i as u64)?;
            fs::write(dir.join(format!("{}.csv", profile.name)), series.to_csv())?;
        }
        Ok(())
    })
}

fn raw_inputs(ctx: &Context) -> Result<(Vec<(String, PathBuf)>, String)> {
    let dir = if ctx.config.uses_synth() {
        ctx.stage_dir("synth")
    } else {
        ctx.config.input_dir.clone()
    };
    let mut files: Vec<(String, PathBuf)> = fs::read_dir(&dir)
        .map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .filter_map(|p| Some((p.file_stem()?.to_string_lossy().into_owned(), p)))
        .collect();
    files.sort();
    if files.len() < 2 {
        return Err(Error::Config(format!("need at least two household CSVs in {}", dir.display())));
    }
    let upstream = if ctx.config.uses_synth() {
        upstream_stamp(ctx, "synth", "preprocess")?
    } else {
        let mut digest_input = Vec::new();
        for (id, path) in &files {
            digest_input.extend_from_slice(id.as_bytes());
            digest_input.extend_from_slice(&fs::read(path)?);
        }
        hex_digest(&digest_input)
    };
    Ok((files, upstream))
}

/// Resamples, removes outliers and splits every household.
pub fn cmd_preprocess(ctx: &Context) -> Result<StageOutcome> {
    let (files, upstream) = raw_inputs(ctx)?;
    let cfg = &ctx.config;
    run_stage(ctx, "preprocess", &upstream, |dir| {
        let split = cfg.split_ts()?;
        let mut reports = BTreeMap::new();
        let mut ids = Vec::new();
        for (id, path) in &files {
            let series = read_regular(path, id).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let (clean, report) = remove_outliers(&series, &cfg.outlier())?;
            let (train, test) = split_train_test(&clean, split)?;
            fs::write(dir.join(format!("{id}_train.csv")), train.to_csv())?;
            fs::write(dir.join(format!("{id}_test.csv")), test.to_csv())?;
            reports.insert(id.clone(), report);
            ids.push(id.clone());
        }
        write_json(&dir.join("outliers.json"), &reports)?;
        write_json(&dir.join("households.json"), &ids)
    })
}

/// Loads the preprocessed households in matrix order.
pub fn load_households(out_dir: &Path) -> Result<Vec<HouseholdData>> {
    let dir = out_dir.join("preprocess");
    let ids: Vec<String> = read_json(&dir.join("households.json"))?;
    ids.into_iter()
        .map(|id| {
            let train = read_regular(&dir.join(format!("{id}_train.csv")), &id)?;
            let test = read_regular(&dir.join(format!("{id}_test.csv")), &id)?;
            Ok(HouseholdData { id, train, test })
        })
        .collect()
}

fn checkpoint_name(source: &str, target: &str) -> String {
    format!("{source}__{target}.json")
}

/// Pretrains, fine-tunes and scores every pair; selects the source.
pub fn cmd_matrix(ctx: &Context) -> Result<StageOutcome> {
    let upstream = upstream_stamp(ctx, "preprocess", "matrix")?;
    let cfg = &ctx.config;
    run_stage(ctx, "matrix", &upstream, |dir| {
        let households = load_households(ctx.out())?;
        let lstm = cfg.lstm();
        let run = match cfg.source_mode {
            SourceMode::All => run_transfer_matrix(&households, &lstm, ctx.jobs)?,
            SourceMode::Random => {
                let source = pick_random_source(households.len(), cfg.seed);
                run_transfer_row(&households, source, &lstm, ctx.jobs)?
            }
        };
        let m = &run.matrix;
        fs::write(dir.join("transfer_matrix.csv"), m.to_csv(cfg.record_timings))?;
        write_json(&dir.join("timing.json"), &run.timing)?;

        let mean = |row: usize, f: fn(&crate::metrics::MetricTriple) -> f64| {
            m.cells[row].iter().map(|c| f(&c.metrics)).sum::<f64>() / m.cells[row].len() as f64
        };
        let selection = Selection {
            mode: cfg.source_mode,
            selected: select_source(m)?,
            mean_rmse: m.sources.iter().enumerate().map(|(r, s)| (s.clone(), mean(r, |x| x.rmse))).collect(),
            mean_mape: m.sources.iter().enumerate().map(|(r, s)| (s.clone(), mean(r, |x| x.mape))).collect(),
        };
        info!("selected source: {}", selection.selected);
        write_json(&dir.join("selection.json"), &selection)?;

        let ckpt = dir.join("checkpoints");
        fs::create_dir_all(&ckpt)?;
        for (r, source) in m.sources.iter().enumerate() {
            for (t, target) in m.households.iter().enumerate() {
                save_model(&run.models[r][t], &ckpt.join(checkpoint_name(source, target)))?;
            }
        }
        Ok(())
    })
}

/// Events and calendars for every target of the selected source.
pub fn cmd_calendar(ctx: &Context) -> Result<StageOutcome> {
    let upstream = upstream_stamp(ctx, "matrix", "calendar")?;
    let cfg = &ctx.config;
    run_stage(ctx, "calendar", &upstream, |dir| {
        let households = load_households(ctx.out())?;
        let selection: Selection = read_json(&ctx.stage_dir("matrix").join("selection.json"))?;
        let offset = cfg.utc_offset_seconds()?;
        let mut all_events: Vec<(String, Event)> = Vec::new();
        for (index, hh) in households.iter().enumerate() {
            if hh.id == selection.selected {
                continue;
            }
            let path = ctx.stage_dir("matrix").join("checkpoints").join(checkpoint_name(&selection.selected, &hh.id));
            let model = load_model(&path)?;
            let predicted = predict_series(&model, &hh.test)?;
            let events = detect_events(&predicted, &cfg.events(index))?;
            let period = (hh.test.start(), hh.test.end() + i64::from(hh.test.step_seconds()));
            let calendar = build_calendar(&hh.id, &events, period, offset, cfg.contamination)?;
            info!("{}: {} events", hh.id, events.len());

            let rows: Vec<(String, Event)> = events.into_iter().map(|e| (hh.id.clone(), e)).collect();
            fs::write(dir.join(format!("{}_events.csv", hh.id)), events_to_csv(&rows))?;
            fs::write(dir.join(format!("{}_calendar.csv", hh.id)), emit_calendar(&calendar, CalendarFormat::Csv)?)?;
            fs::write(dir.join(format!("{}_calendar.json", hh.id)), emit_calendar(&calendar, CalendarFormat::Json)?)?;
            all_events.extend(rows);
        }
        fs::write(dir.join("events.csv"), events_to_csv(&all_events))
            .map_err(Error::from)
    })
}

/// Runs every stage in order and writes `run_report.json`.
pub fn cmd_all(ctx: &Context) -> Result<RunReport> {
    let mut stages = Vec::new();
    if ctx.config.uses_synth() {
        stages.push(cmd_synth(ctx)?);
    }
    stages.push(cmd_preprocess(ctx)?);
    stages.push(cmd_matrix(ctx)?);
    stages.push(cmd_calendar(ctx)?);

    let matrix_dir = ctx.stage_dir("matrix");
    let selection: Selection = read_json(&matrix_dir.join("selection.json"))?;
    let timing: crate::transfer::TimingReport = read_json(&matrix_dir.join("timing.json"))?;
    let households: Vec<String> = read_json(&ctx.stage_dir("preprocess").join("households.json"))?;
    let sources: Vec<String> = timing.per_source.iter().map(|s| s.source.clone()).collect();
    let calendars = households.iter().filter(|h| **h != selection.selected).cloned().collect();
    let report = RunReport {
        config_hash: ctx.config.hash(),
        matrix: MatrixSummary {
            cells: sources.len() * households.len(),
            households,
            sources,
            selected_source: selection.selected,
            epoch_saving: timing.epoch_saving,
            wall_clock_saving: timing.per_source.iter().map(|s| (s.source.clone(), s.percent_saved)).collect(),
        },
        stages,
        calendars,
    };
    let tmp = ctx.out().join(".run_report.json.partial");
    write_json(&tmp, &report)?;
    fs::rename(&tmp, ctx.out().join("run_report.json"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(out: &Path) -> Context {
        let config = PipelineConfig {
            out_dir: out.to_path_buf(),
            synth_train_days: 2,
            synth_test_days: 1,
            units: 3,
            lookback: 10,
            epochs: 2,
            fine_tune_epochs: 1,
            windows_per_epoch: 64,
            val_windows: 32,
            ..PipelineConfig::default()
        };
        Context::new(config, 1, false)
    }

    #[test]
    fn stages_need_their_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = tiny(dir.path());
        assert!(matches!(cmd_matrix(&ctx), Err(Error::Config(_))));
        assert!(cmd_preprocess(&ctx).is_err());
    }

    #[test]
    fn stamps_skip_and_force_reruns() {
        let dir = tempfile::tempdir().unwrap();
        let mut ctx = tiny(dir.path());
        let first = cmd_synth(&ctx).unwrap();
        assert!(!first.skipped);
        assert_eq!(first.artifacts.len(), 6);
        assert!(cmd_synth(&ctx).unwrap().skipped);
        ctx.force = true;
        assert!(!cmd_synth(&ctx).unwrap().skipped);
        ctx.force = false;
        ctx.config.seed += 1;
        assert!(!cmd_synth(&ctx).unwrap().skipped);
    }

    #[test]
    fn failed_stage_leaves_no_partial_output() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = tiny(dir.path());
        cmd_synth(&ctx).unwrap();
        // A split after the end of the data fails inside the stage.
        let mut bad = ctx.clone();
        bad.config.split_time = "2030-01-01T00:00:00Z".into();
        assert!(matches!(cmd_preprocess(&bad), Err(Error::SplitOutOfRange { .. })));
        assert!(!dir.path().join("preprocess").exists());
        assert!(!dir.path().join(".preprocess.partial").exists());
    }

    #[test]
    fn full_run_on_tiny_config() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = tiny(dir.path());
        let report = cmd_all(&ctx).unwrap();
        assert_eq!(report.matrix.cells, 36);
        assert_eq!(report.calendars.len(), 5);
        for stage in &report.stages {
            for artifact in &stage.artifacts {
                assert!(dir.path().join(artifact).is_file(), "{}", artifact.display());
            }
        }
        assert!(dir.path().join("run_report.json").is_file());
        let second = cmd_all(&ctx).unwrap();
        assert!(second.stages.iter().all(|s| s.skipped));
    }
}
