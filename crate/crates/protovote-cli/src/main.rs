//! Deterministic command-line front end for the classification toolkit.
//!
//! Workflow: `prep` a raw count table into a normalized matrix, `split` it,
//! `train` / `eval` a model stack per component count (or `cv` for fold-wise
//! estimates), `report` to aggregate a sweep, and `theory` to run the
//! verification battery. Re-running any subcommand with the same inputs and
//! seed reproduces its artifacts byte for byte; logs (the only place with
//! timestamps) go to stderr.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

mod artifact;
mod commands;
mod config;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "protovote", version, about = "Prototype + boosted-tree hard-vote classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Feature matrix (CSV/TSV; sample ids in the first column).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Label table (CSV/TSV; columns `sample_id,label`).
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// Component counts, comma separated and increasing (a sweep).
    #[arg(long, global = true, value_delimiter = ',')]
    pcs: Option<Vec<usize>>,
    /// Models to report: proto, gbdt_leaf, gbdt_depth, ensemble.
    #[arg(long = "model", global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Master seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fold count: selects k-fold plans for `split`, sets k for `cv`.
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Held-out fraction for holdout splits.
    #[arg(long, global = true)]
    test_fraction: Option<f64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Treat the input as already normalized (skip filtering, count
    /// normalization, and column standardization).
    #[arg(long, global = true)]
    skip_normalization: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest raw counts: normalize, filter, select, write the processed matrix.
    Prep,
    /// Build and persist a stratified split plan.
    Split,
    /// Fit one model stack per component count on the training rows.
    Train,
    /// Score persisted stacks on the held-out rows.
    Eval,
    /// Cross-validate every component count with one shared fold plan.
    Cv,
    /// Run the verification battery; non-zero exit if any bound fails.
    Theory,
    /// Aggregate a sweep into an accuracy-vs-components table.
    Report,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            input: self.input.clone(),
            labels: self.labels.clone(),
            pcs: self.pcs.clone(),
            models: self.models.clone(),
            seed: self.seed,
            folds: self.folds,
            test_fraction: self.test_fraction,
            out: self.out.clone(),
            skip_normalization: self.skip_normalization,
        }
    }
}

fn init_thread_pool() -> Result<()> {
    if let Ok(raw) = std::env::var("PROTOVOTE_THREADS") {
        let n: usize = raw
            .parse()
            .with_context(|| format!("PROTOVOTE_THREADS must be a positive integer, got {raw:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_thread_pool()?;
    let cli = Cli::parse();
    let cfg = RunConfig::resolve(cli.flags.config.as_deref(), &cli.flags.overrides())?;
    log::info!("resolved config hash {}", cfg.hash());
    match cli.command {
        Command::Prep => commands::prep(&cfg),
        Command::Split => commands::split(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Cv => commands::cv(&cfg),
        Command::Theory => commands::theory(&cfg),
        Command::Report => commands::report(&cfg),
    }
}
