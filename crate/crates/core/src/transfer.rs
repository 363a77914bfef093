//! Cross-household transfer: pretrain on a source, fine-tune on every other
//! household, score every pair and pick the best source.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricTriple;
use crate::neuralnet::{make_windows, predict_series, train, LstmConfig, LstmModel, TrainHistory};
use crate::rng::{self, streams};
use crate::timeseries::RegularSeries;

/// A preprocessed household split into train and test series.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdData {
    pub id: String,
    pub train: RegularSeries,
    pub test: RegularSeries,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransferJob {
    pub source_id: String,
    pub target_id: String,
}

/// Test-split scores of one model on one household.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricTriple,
    /// Mean absolute error in °C.
    pub mae: f64,
}

/// A model together with the training that produced it.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: LstmModel,
    pub history: TrainHistory,
    /// Wall-clock seconds spent in training only.
    pub seconds: f64,
}

pub fn pretrain(source: &HouseholdData, config: &LstmConfig) -> Result<Trained> {
    let data = make_windows(&source.train, config, None)?;
    let model = LstmModel::new(config.clone(), *data.scaler())?;
    let started = Instant::now();
    let (model, history) = train(model, &data, &config.train_options(config.epochs, config.seed))?;
    Ok(Trained {
        model,
        history,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Continues training every parameter of `base` on the target for
/// `fine_tune_epochs`, with the scaler refit on the target's training data
/// and fresh optimizer moments.
pub fn fine_tune(base: &LstmModel, target: &HouseholdData, seed: u64) -> Result<Trained> {
    base.check_shapes()?;
    let config = &base.config;
    let data = make_windows(&target.train, config, None)?;
    let started = Instant::now();
    let (model, history) = train(base.clone(), &data, &config.train_options(config.fine_tune_epochs, seed))?;
    Ok(Trained {
        model,
        history,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Trains a fresh model on `target` for `epochs` epochs; the baseline that
/// fine-tuning is compared against.
pub fn from_scratch(target: &HouseholdData, config: &LstmConfig, epochs: usize, seed: u64) -> Result<Trained> {
    let config = LstmConfig {
        epochs,
        seed,
        ..config.clone()
    };
    pretrain(target, &config)
}

/// Teacher-forced one-step forecast over the test split, scored against the
/// observed values it predicts.
pub fn evaluate(model: &LstmModel, household: &HouseholdData) -> Result<Evaluation> {
    let pred = predict_series(model, &household.test)?;
    let actual = &household.test.values()[model.config.lookback..];
    let metrics = MetricTriple::evaluate(actual, pred.values())?;
    let mae = actual.iter().zip(pred.values()).map(|(a, p)| (a - p).abs()).sum::<f64>() / actual.len() as f64;
    Ok(Evaluation { metrics, mae })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub epochs: usize,
    pub seconds: f64,
}

/// Scores of each source row against every household. Full runs have one
/// row per household; single-source runs have one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub households: Vec<String>,
    pub sources: Vec<String>,
    /// `cells[row][target]`, rows in `sources` order.
    pub cells: Vec<Vec<Evaluation>>,
    pub timings: Vec<Vec<CellTiming>>,
}

impl TransferMatrix {
    pub fn source_index(&self, id: &str) -> Option<usize> {
        self.sources.iter().position(|s| s == id)
    }

    pub fn is_self(&self, row: usize, target: usize) -> bool {
        self.sources[row] == self.households[target]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    /// Mean R² each household receives as a target, over every source row.
    pub fn target_mean_r2(&self) -> Vec<f64> {
        (0..self.households.len())
            .map(|t| self.cells.iter().map(|row| row[t].metrics.r2).sum::<f64>() / self.cells.len() as f64)
            .collect()
    }

    /// `source,target,mape,rmse,r2,epochs,seconds`. Seconds stay empty unless
    /// `with_seconds`, so the file is reproducible byte for byte.
    pub fn to_csv(&self, with_seconds: bool) -> String {
        let mut out = String::from("source,target,mape,rmse,r2,epochs,seconds\n");
        for (r, source) in self.sources.iter().enumerate() {
            for (t, target) in self.households.iter().enumerate() {
                let m = self.cells[r][t].metrics;
                let timing = self.timings[r][t];
                let seconds = if with_seconds { format!("{:.3}", timing.seconds) } else { String::new() };
                writeln!(out, "{source},{target},{},{},{},{},{seconds}", m.mape, m.rmse, m.r2, timing.epochs)
                    .expect("writing to a String");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTiming {
    pub source: String,
    pub pretrain_seconds: f64,
    pub fine_tune_seconds: f64,
    /// `1 - (pretrain + Σ fine-tune) / Σ from-scratch`
    pub percent_saved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub households: Vec<String>,
    /// Seconds to train each household for the full epoch budget. In a full
    /// run these are the pretrain times; in a single-source run every entry
    /// is the one pretrain time.
    pub from_scratch_seconds: Vec<f64>,
    pub from_scratch_estimated: bool,
    pub per_source: Vec<SourceTiming>,
    /// `1 - (E + (n-1) F) / (n E)` in epoch units.
    pub epoch_saving: f64,
}

impl TimingReport {
    fn build(matrix: &TransferMatrix, config: &LstmConfig) -> Self {
        let n = matrix.households.len();
        let estimated = matrix.sources.len() != n;
        let from_scratch_seconds: Vec<f64> = if estimated {
            let t = matrix.timings[0][matrix.households.iter().position(|h| *h == matrix.sources[0]).unwrap_or(0)].seconds;
            vec![t; n]
        } else {
            matrix
                .households
                .iter()
                .map(|h| {
                    let r = matrix.source_index(h).expect("full run has every source");
                    let t = matrix.households.iter().position(|x| x == h).expect("own column");
                    matrix.timings[r][t].seconds
                })
                .collect()
        };
        let scratch_total: f64 = from_scratch_seconds.iter().sum();
        let per_source = matrix
            .sources
            .iter()
            .enumerate()
            .map(|(r, source)| {
                let mut pretrain_seconds = 0.0;
                let mut fine_tune_seconds = 0.0;
                for (t, timing) in matrix.timings[r].iter().enumerate() {
                    if matrix.is_self(r, t) {
                        pretrain_seconds += timing.seconds;
                    } else {
                        fine_tune_seconds += timing.seconds;
                    }
                }
                SourceTiming {
                    source: source.clone(),
                    pretrain_seconds,
                    fine_tune_seconds,
                    percent_saved: 1.0 - (pretrain_seconds + fine_tune_seconds) / scratch_total,
                }
            })
            .collect();
        Self {
            households: matrix.households.clone(),
            from_scratch_seconds,
            from_scratch_estimated: estimated,
            per_source,
            epoch_saving: epoch_saving(config.epochs, config.fine_tune_epochs, n),
        }
    }
}

/// Fraction of training epochs saved by pretraining once for `epochs` and
/// fine-tuning `n - 1` times for `fine_tune_epochs`, versus `n` full runs.
pub fn epoch_saving(epochs: usize, fine_tune_epochs: usize, n: usize) -> f64 {
    1.0 - (epochs + (n - 1) * fine_tune_epochs) as f64 / (n * epochs) as f64
}

/// All models produced by a transfer run, indexed like the matrix.
#[derive(Debug, Clone)]
pub struct TransferRun {
    pub matrix: TransferMatrix,
    pub timing: TimingReport,
    /// `models[row][target]`: the pretrained model on the diagonal,
    /// fine-tuned models elsewhere.
    pub models: Vec<Vec<LstmModel>>,
    pub histories: Vec<Vec<TrainHistory>>,
}

fn job_error(source: &str, target: &str) -> impl FnOnce(Error) -> Error {
    let (source_id, target_id) = (source.to_string(), target.to_string());
    move |inner| Error::Job {
        source_id,
        target_id,
        inner: Box::new(inner),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

struct Row {
    cells: Vec<Evaluation>,
    timings: Vec<CellTiming>,
    models: Vec<LstmModel>,
    histories: Vec<TrainHistory>,
}

fn run_row(households: &[HouseholdData], source: usize, config: &LstmConfig) -> Result<Row> {
    let src = &households[source];
    let base = pretrain(src, config).map_err(job_error(&src.id, &src.id))?;
    let results: Vec<(Trained, Evaluation)> = households
        .par_iter()
        .enumerate()
        .map(|(t, target)| {
            let trained = if t == source {
                base.clone()
            } else {
                fine_tune(&base.model, target, config.seed + t as u64).map_err(job_error(&src.id, &target.id))?
            };
            let eval = evaluate(&trained.model, target).map_err(job_error(&src.id, &target.id))?;
            Ok((trained, eval))
        })
        .collect::<Result<_>>()?;

    let mut row = Row {
        cells: Vec::new(),
        timings: Vec::new(),
        models: Vec::new(),
        histories: Vec::new(),
    };
    for (t, (trained, eval)) in results.into_iter().enumerate() {
        row.cells.push(eval);
        row.timings.push(CellTiming {
            epochs: if t == source { config.epochs } else { config.fine_tune_epochs },
            seconds: trained.seconds,
        });
        row.models.push(trained.model);
        row.histories.push(trained.history);
    }
    Ok(row)
}

fn check_households(households: &[HouseholdData], config: &LstmConfig) -> Result<()> {
    config.validate()?;
    if households.len() < 2 {
        return Err(Error::InvalidArgument("transfer needs at least two households".into()));
    }
    let mut ids: Vec<&str> = households.iter().map(|h| h.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("household ids must be unique".into()));
    }
    Ok(())
}

fn assemble(households: &[HouseholdData], sources: Vec<usize>, rows: Vec<Row>, config: &LstmConfig) -> TransferRun {
    let mut matrix = TransferMatrix {
        households: households.iter().map(|h| h.id.clone()).collect(),
        sources: sources.iter().map(|&s| households[s].id.clone()).collect(),
        cells: Vec::new(),
        timings: Vec::new(),
    };
    let mut models = Vec::new();
    let mut histories = Vec::new();
    for row in rows {
        matrix.cells.push(row.cells);
        matrix.timings.push(row.timings);
        models.push(row.models);
        histories.push(row.histories);
    }
    let timing = TimingReport::build(&matrix, config);
    TransferRun {
        matrix,
        timing,
        models,
        histories,
    }
}

/// Every household serves once as the source. Fine-tunes for one source run
/// on `jobs` threads; with `jobs = 1` everything is sequential.
pub fn run_transfer_matrix(households: &[HouseholdData], config: &LstmConfig, jobs: usize) -> Result<TransferRun> {
    check_households(households, config)?;
    let pool = pool(jobs)?;
    let rows = pool.install(|| (0..households.len()).map(|s| run_row(households, s, config)).collect::<Result<Vec<_>>>())?;
    Ok(assemble(households, (0..households.len()).collect(), rows, config))
}

/// One source row only: pretrain on `source`, fine-tune on the rest.
pub fn run_transfer_row(households: &[HouseholdData], source: usize, config: &LstmConfig, jobs: usize) -> Result<TransferRun> {
    check_households(households, config)?;
    if source >= households.len() {
        return Err(Error::InvalidArgument(format!("source index {source} out of range")));
    }
    let pool = pool(jobs)?;
    let row = pool.install(|| run_row(households, source, config))?;
    Ok(assemble(households, vec![source], vec![row], config))
}

/// Seeded choice of a single pretraining source.
pub fn pick_random_source(n_households: usize, seed: u64) -> usize {
    rng::stream(seed, streams::SOURCE_PICK).gen_range(0..n_households)
}

/// Source with the lowest mean RMSE over its whole row (self cell included),
/// then lowest mean MAPE, then smallest id.
pub fn select_source(matrix: &TransferMatrix) -> Result<String> {
    if matrix.cells.is_empty() || matrix.cells.iter().any(Vec::is_empty) {
        return Err(Error::Empty("transfer matrix has no cells".into()));
    }
    let mean = |row: &[Evaluation], f: fn(&MetricTriple) -> f64| row.iter().map(|c| f(&c.metrics)).sum::<f64>() / row.len() as f64;
    let best = (0..matrix.sources.len())
        .min_by(|&a, &b| {
            let (ra, rb) = (&matrix.cells[a], &matrix.cells[b]);
            mean(ra, |m| m.rmse)
                .total_cmp(&mean(rb, |m| m.rmse))
                .then(mean(ra, |m| m.mape).total_cmp(&mean(rb, |m| m.mape)))
                .then(matrix.sources[a].cmp(&matrix.sources[b]))
        })
        .expect("non-empty");
    Ok(matrix.sources[best].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{default_profiles, generate_household};
    use crate::timeseries::split_train_test;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MONDAY: i64 = 1_704_067_200;

    fn cell(rmse: f64, mape: f64) -> Evaluation {
        Evaluation {
            metrics: MetricTriple { mape, rmse, r2: 0.9 },
            mae: rmse,
        }
    }

    fn matrix(ids: &[&str], rows: Vec<Vec<Evaluation>>) -> TransferMatrix {
        let n = ids.len();
        TransferMatrix {
            households: ids.iter().map(|s| s.to_string()).collect(),
            sources: ids.iter().map(|s| s.to_string()).collect(),
            cells: rows,
            timings: vec![vec![CellTiming { epochs: 1, seconds: 0.0 }; n]; n],
        }
    }

    #[test]
    fn dominant_source_wins() {
        let m = matrix(&["a", "b"], vec![vec![cell(1.0, 0.1), cell(1.0, 0.1)], vec![cell(2.0, 0.01), cell(2.0, 0.01)]]);
        assert_eq!(select_source(&m).unwrap(), "a");
    }

    #[test]
    fn mape_breaks_rmse_ties_then_id() {
        let m = matrix(&["a", "b"], vec![vec![cell(1.0, 0.2), cell(3.0, 0.2)], vec![cell(2.0, 0.1), cell(2.0, 0.1)]]);
        assert_eq!(select_source(&m).unwrap(), "b");
        let m = matrix(&["b", "a"], vec![vec![cell(1.0, 0.1), cell(1.0, 0.1)], vec![cell(1.0, 0.1), cell(1.0, 0.1)]]);
        assert_eq!(select_source(&m).unwrap(), "a");
        assert!(select_source(&matrix(&[], vec![])).is_err());
    }

    fn brute_force_select(m: &TransferMatrix) -> String {
        let mut ranked: Vec<(f64, f64, String)> = m
            .cells
            .iter()
            .zip(&m.sources)
            .map(|(row, id)| {
                let n = row.len() as f64;
                let mut rmse = 0.0;
                let mut mape = 0.0;
                for c in row {
                    rmse += c.metrics.rmse;
                    mape += c.metrics.mape;
                }
                (rmse / n, mape / n, id.clone())
            })
            .collect();
        ranked.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ranked.remove(0).2
    }

    proptest! {
        #[test]
        fn selection_matches_brute_force(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ids = ["hh1", "hh2", "hh3", "hh4", "hh5", "hh6"];
            // Coarse dyadic values sum exactly, so ties survive reordering and
            // exercise the tiebreaks.
            let rows: Vec<Vec<Evaluation>> = (0..6)
                .map(|_| (0..6).map(|_| cell(rng.gen_range(1..4) as f64, rng.gen_range(1..3) as f64 / 64.0)).collect())
                .collect();
            let m = matrix(&ids, rows.clone());
            prop_assert_eq!(select_source(&m).unwrap(), brute_force_select(&m));

            // Reordering the households (rows and columns together) does not change the choice.
            let perm = [3usize, 5, 0, 2, 4, 1];
            let shuffled_ids: Vec<&str> = perm.iter().map(|&i| ids[i]).collect();
            let shuffled_rows = perm.iter().map(|&r| perm.iter().map(|&c| rows[r][c]).collect()).collect();
            prop_assert_eq!(select_source(&matrix(&shuffled_ids, shuffled_rows)).unwrap(), select_source(&m).unwrap());
        }
    }

    #[test]
    fn epoch_accounting() {
        assert!((epoch_saving(50, 10, 6) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(epoch_saving(10, 10, 4), 0.0);
    }

    fn tiny_households(n: usize) -> Vec<HouseholdData> {
        default_profiles()
            .into_iter()
            .take(n)
            .map(|p| {
                let s = generate_household(&p, MONDAY, 3, 7).unwrap();
                let (train, test) = split_train_test(&s, MONDAY + 2 * 86_400).unwrap();
                HouseholdData {
                    id: p.name.clone(),
                    train,
                    test,
                }
            })
            .collect()
    }

    fn tiny_config() -> LstmConfig {
        LstmConfig {
            units: 4,
            lookback: 10,
            epochs: 3,
            fine_tune_epochs: 2,
            batch_size: 32,
            windows_per_epoch: 128,
            val_windows: 64,
            ..LstmConfig::default()
        }
    }

    #[test]
    fn fine_tune_starts_from_base_and_refits_scaler() {
        let hh = tiny_households(2);
        let cfg = tiny_config();
        let base = pretrain(&hh[0], &cfg).unwrap();
        assert_eq!(base.history.len(), 3);
        assert_eq!(base.model.config.epochs, 3);

        // One epoch at a vanishing learning rate leaves every weight at its base value.
        let frozen = LstmModel {
            config: LstmConfig {
                fine_tune_epochs: 1,
                learning_rate: f64::MIN_POSITIVE,
                ..cfg.clone()
            },
            ..base.model.clone()
        };
        let ft = fine_tune(&frozen, &hh[1], 5).unwrap();
        assert_eq!(ft.model.params, base.model.params);
        let target_scaler = *make_windows(&hh[1].train, &cfg, None).unwrap().scaler();
        assert_eq!(ft.model.scaler, target_scaler);

        let ft = fine_tune(&base.model, &hh[1], 5).unwrap();
        assert_eq!(ft.history.len(), 2);
    }

    #[test]
    fn pretrain_is_deterministic() {
        let hh = tiny_households(1);
        let a = pretrain(&hh[0], &tiny_config()).unwrap();
        let b = pretrain(&hh[0], &tiny_config()).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn matrix_is_full_and_cells_reproduce_in_isolation() {
        let hh = tiny_households(3);
        let cfg = tiny_config();
        let run = run_transfer_matrix(&hh, &cfg, 1).unwrap();
        let m = &run.matrix;
        assert_eq!(m.n_cells(), 9);
        for r in 0..3 {
            for t in 0..3 {
                let expected = if r == t { 3 } else { 2 };
                assert_eq!(m.timings[r][t].epochs, expected);
                assert_eq!(run.histories[r][t].len(), expected);
            }
        }
        assert!((run.timing.epoch_saving - epoch_saving(3, 2, 3)).abs() < 1e-15);
        assert_eq!(m.to_csv(false).lines().count(), 10);

        // Cell (2, 0) on its own.
        let base = pretrain(&hh[2], &cfg).unwrap();
        let ft = fine_tune(&base.model, &hh[0], cfg.seed).unwrap();
        assert_eq!(evaluate(&ft.model, &hh[0]).unwrap(), m.cells[2][0]);

        let parallel = run_transfer_matrix(&hh, &cfg, 2).unwrap();
        assert_eq!(parallel.matrix.cells, m.cells);

        let row = run_transfer_row(&hh, 1, &cfg, 1).unwrap();
        assert_eq!(row.matrix.cells[0], m.cells[1]);
        assert!(row.timing.from_scratch_estimated);
    }

    #[test]
    fn failures_name_the_pair() {
        let mut hh = tiny_households(2);
        hh[1].test = hh[1].test.slice(0, 5);
        let err = run_transfer_matrix(&hh, &tiny_config(), 1).unwrap_err();
        match err {
            Error::Job { source_id, target_id, .. } => {
                assert_eq!(source_id, "hh1");
                assert_eq!(target_id, "hh2");
            }
            other => panic!("unexpected {other}"),
        }
    }
}
