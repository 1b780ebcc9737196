//! Command-line driver: synthetic experiments, surgery on external gradient
//! dumps, and similarity analysis of recorded runs.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 numerical failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gradvac_core::Mode;

mod analyze;
mod combine;
mod error;
pub mod files;
mod output;
mod simulate;

pub use analyze::{analyze, AnalyzeArgs};
pub use combine::{combine, CombineArgs};
pub use error::{CliError, CliResult};
pub use output::OutputSet;
pub use simulate::{simulate, SimulateArgs};

/// Environment variable holding the log filter (e.g. `info`, `debug`).
pub const LOG_ENV: &str = "GRADVAC_LOG";

#[derive(Debug, Parser)]
#[command(name = "gradvac", version, about = "Multi-task gradient surgery toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a synthetic experiment and write its trajectory.
    Simulate(SimulateCmd),
    /// Combine the per-task gradients of one dumped step.
    Combine(CombineCmd),
    /// Aggregate the similarity records of a simulate run.
    Analyze(AnalyzeCmd),
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: gradvac_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Experiment file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out_dir` in the experiment file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the experiment file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// gradvac, pcgrad, sum or fixed:<target>.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct CombineCmd {
    /// Gradient dump (JSON).
    pub dump: PathBuf,
    /// Surgery settings (JSON); defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving combined.json and report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// EMA snapshot to continue from.
    #[arg(long)]
    pub ema_in: Option<PathBuf>,
    /// Where to write the updated EMA snapshot [default: <out>/ema.json].
    #[arg(long)]
    pub ema_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct AnalyzeCmd {
    /// Output directory of a simulate run.
    pub records_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// First step to include.
    #[arg(long)]
    pub from_step: Option<u64>,
    /// Last step to include.
    #[arg(long)]
    pub to_step: Option<u64>,
    /// Sliding-window width for activity counts.
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    /// Group pair to contrast, as `a,b`; repeatable.
    #[arg(long = "contrast", value_parser = parse_pair)]
    pub contrasts: Vec<(String, String)>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected `group_a,group_b`, got `{s}`")),
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => simulate(&SimulateArgs {
            config: c.config,
            out: c.out,
            seed: c.seed,
            mode: c.mode,
        }),
        Command::Combine(c) => combine(&CombineArgs {
            dump: c.dump,
            config: c.config,
            out: c.out,
            ema_in: c.ema_in,
            ema_out: c.ema_out,
            seed: c.seed,
            mode: c.mode,
        }),
        Command::Analyze(c) => analyze(&AnalyzeArgs {
            records_dir: c.records_dir,
            out: c.out,
            from_step: c.from_step,
            to_step: c.to_step,
            window: c.window,
            contrasts: c.contrasts,
        }),
    }
}
