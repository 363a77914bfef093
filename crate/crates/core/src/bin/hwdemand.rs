use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use hwdemand::config::PipelineConfig;
use hwdemand::pipeline::{cmd_all, cmd_calendar, cmd_matrix, cmd_preprocess, cmd_synth, Context, StageOutcome};

/// Hot-water demand forecasting, cross-household transfer and weekly shower calendars.
#[derive(Parser)]
#[command(name = "hwdemand", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key = value config file (TOML syntax).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for fine-tuning jobs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Rerun stages even if their outputs are up to date.
    #[arg(long, global = true)]
    force: bool,

    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override any config key, e.g. `--set epochs=10`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the six synthetic household recordings.
    Synth,
    /// Resample, clean and split every household.
    Preprocess,
    /// Pretrain, fine-tune and score every source/target pair.
    Matrix,
    /// Detect shower events and write weekly calendars.
    Calendar,
    /// Run every stage and write run_report.json.
    All,
}

fn print_stage(s: &StageOutcome) {
    let state = if s.skipped { "skipped" } else { "done" };
    println!("{:<10} {:<7} {:>8.1}s  {} files", s.stage, state, s.seconds, s.artifacts.len());
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut overrides = cli.overrides;
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", toml::Value::String(out.display().to_string())));
    }
    let config = PipelineConfig::load(cli.config.as_deref(), &overrides).context("invalid configuration")?;
    let ctx = Context::new(config, cli.jobs, cli.force);
    match cli.command {
        Command::Synth => print_stage(&cmd_synth(&ctx)?),
        Command::Preprocess => print_stage(&cmd_preprocess(&ctx)?),
        Command::Matrix => print_stage(&cmd_matrix(&ctx)?),
        Command::Calendar => print_stage(&cmd_calendar(&ctx)?),
        Command::All => {
            let report = cmd_all(&ctx)?;
            report.stages.iter().for_each(print_stage);
            println!(
                "{} matrix cells, selected source {}, {} calendars",
                report.matrix.cells,
                report.matrix.selected_source,
                report.calendars.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
