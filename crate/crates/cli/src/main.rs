//! Command-line driver for the forecasting pipeline.
//!
//! ```bash
//! stackcast --config fixtures/fixture.toml run-all
//! stackcast --config my.toml features
//! stackcast --config my.toml train --model rf --time-series-cv
//! ```
//!
//! Exit codes: 0 success, 1 config error, 2 data error, 3 stage failure.

mod config;
mod error;
mod pipeline;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ModelKind, PipelineConfig};
use error::CliError;
use pipeline::Pipeline;

#[derive(Parser)]
#[command(name = "stackcast", version, about = "Indicator features, Boruta selection, tuned learners and a stacked ensemble for daily closing prices")]
struct Cli {
    /// Pipeline configuration (TOML)
    #[arg(long, global = true, default_value = "stackcast.toml")]
    config: PathBuf,

    /// Global seed; overrides `seed` in the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides `out_dir`
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for every parallel stage
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Forecast horizon in days (0 = same-day close)
    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Train on Confirmed features only
    #[arg(long, global = true)]
    drop_tentative: bool,

    /// Forward-chaining folds instead of shuffled k-fold
    #[arg(long, global = true)]
    time_series_cv: bool,

    /// Log errors only
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build indicator features, split at the boundary and fit the scaler
    Features,
    /// Run Boruta on the training features
    Select,
    /// Tune and fit one model
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
    },
    /// Score every trained model on both slices
    Evaluate,
    /// Every stage in order, then a manifest
    RunAll,
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format(|buf, record| {
            let target = record.target();
            let stage = target.strip_prefix("stackcast::").unwrap_or(target);
            writeln!(buf, "[{stage}] {}: {}", record.level(), record.args())
        })
        .init();
}

fn configure(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(h) = cli.horizon {
        cfg.horizon = h;
    }
    if cli.drop_tentative {
        cfg.select.drop_tentative = true;
    }
    if cli.time_series_cv {
        cfg.cv.time_series = true;
    }
    cfg.validate()?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {j} worker threads: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = configure(&cli)?;
    let p = Pipeline::new(cfg);
    match cli.command {
        Command::Features => p.cmd_features().map(drop),
        Command::Select => p.cmd_select().map(drop),
        Command::Train { model } => p.cmd_train(model).map(drop),
        Command::Evaluate => p.cmd_evaluate().map(drop),
        Command::RunAll => p.cmd_run_all().map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!(target: "stackcast", "{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
