//! Batch command-line front end.
//!
//! Every command reads a [`RunConfig`] and writes under
//! `<out.dir>/runs/<run.id>/`. Exit codes: 0 success, 1 data or configuration
//! error, 2 domain error such as a dependency cycle or an infeasible program,
//! 3 internal invariant violation.

mod commands;
mod config;
mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, KEYS};
pub use svg::line_chart;

use crate::error::Result;
use commands::Context;

#[derive(Debug, Parser)]
#[command(name = "alphaforge", version, about = "Mine, evaluate, combine and backtest symbolic alpha factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// key = value configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for parallel stages; 0 uses every core
    #[arg(long, value_name = "N", default_value_t = 0)]
    workers: usize,
    /// Output root; overrides out.dir
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and preprocess a panel CSV into the run directory
    Ingest(Common),
    /// Search for factors and append accepted ones to the factor base
    Mine(Common),
    /// Backtest a signal and write equity, weights and report files
    Backtest(Common),
    /// Consolidate backtest reports across runs and draw charts
    Report(Common),
    /// Print the evaluation order of factor base records
    Schedule {
        #[command(flatten)]
        common: Common,
        /// Record ids or names; defaults to schedule.targets, then every active record
        targets: Vec<String>,
    },
}

fn context(common: &Common) -> Result<Context> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    if let Some(out) = &common.out {
        cfg.set("out.dir", &out.to_string_lossy())?;
    }
    if common.workers > 0 {
        // a pool may already exist when called in-process; the miner sizes its own
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.workers).build_global();
    }
    Ok(Context {
        cfg,
        workers: common.workers,
    })
}

fn dispatch(command: &Command) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Ingest(c) => context(c)?.ingest(&mut stdout),
        Command::Mine(c) => context(c)?.mine(&mut stdout),
        Command::Backtest(c) => context(c)?.backtest(&mut stdout),
        Command::Report(c) => context(c)?.report(&mut stdout),
        Command::Schedule { common, targets } => context(common)?.schedule(targets, &mut stdout),
    }
}

/// Parse arguments, run one command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
