//! `nowcast`: batch runs of nowcasting, rolling evaluation, simulation,
//! epidemic thresholds and delay summaries.
//!
//! Exit status is 0 on success, 2 for usage or input problems and 1 for
//! numerical or internal failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "nowcast", version, about = "Nowcast weekly case counts from delayed line-list data")]
struct Cli {
    /// JSON file whose keys are long flag names; flags and NOWCAST_* variables override it.
    #[arg(long, global = true, env = "NOWCAST_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Nowcast the incomplete weeks as of one week.
    Nowcast(NowcastArgs),
    /// Refit every week of a range and score the nowcasts against final counts.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic line list, truth and signals.
    Simulate(SimulateArgs),
    /// Epidemic threshold from complete epidemiological years.
    Threshold(ThresholdArgs),
    /// Reporting-delay summaries.
    Delays(DelaysArgs),
}

/// Inputs shared by the commands that fit models.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Case line list CSV.
    #[arg(long, env = "NOWCAST_LINELIST")]
    pub linelist: Option<PathBuf>,
    /// Online signal as name=path; repeatable.
    #[arg(long = "signal", env = "NOWCAST_SIGNAL", value_delimiter = ',')]
    pub signals: Vec<String>,
    /// Training window: full | 2y | 1y | 6m.
    #[arg(long, env = "NOWCAST_WINDOW")]
    pub window: Option<String>,
    /// Posterior draws per fit [default: 1000].
    #[arg(long, env = "NOWCAST_SAMPLES")]
    pub samples: Option<usize>,
    #[arg(long, env = "NOWCAST_SEED")]
    pub seed: Option<u64>,
    /// Cases delayed longer than this many weeks are dropped [default: 26].
    #[arg(long, env = "NOWCAST_MAX_DELAY_CAP")]
    pub max_delay_cap: Option<u32>,
    /// Smallest modeled maximum delay [default: 8].
    #[arg(long, env = "NOWCAST_DMAX_FLOOR")]
    pub dmax_floor: Option<u32>,
    /// Share of cases the modeled delays must cover [default: 0.95].
    #[arg(long, env = "NOWCAST_DMAX_COVERAGE")]
    pub dmax_coverage: Option<f64>,
    /// Output directory [default: .].
    #[arg(long, env = "NOWCAST_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NowcastArgs {
    /// Model variant [default: baseline].
    #[arg(long, env = "NOWCAST_MODEL")]
    pub model: Option<String>,
    /// Week of the nowcast, YYYY-Www [default: last entry week of the line list].
    #[arg(long, env = "NOWCAST_AS_OF")]
    pub as_of: Option<String>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model variants, comma separated or repeated [default: baseline].
    #[arg(long, env = "NOWCAST_MODEL", value_delimiter = ',')]
    pub model: Vec<String>,
    /// Model the relative metrics divide by [default: baseline if evaluated, else the first model].
    #[arg(long, env = "NOWCAST_REFERENCE")]
    pub reference: Option<String>,
    /// First evaluated week, YYYY-Www.
    #[arg(long, env = "NOWCAST_START")]
    pub start: Option<String>,
    /// Last evaluated week, YYYY-Www.
    #[arg(long, env = "NOWCAST_END")]
    pub end: Option<String>,
    /// Week by which all reporting is final [default: last entry week of the line list].
    #[arg(long, env = "NOWCAST_DATA_END")]
    pub data_end: Option<String>,
    /// Weekly count marking epidemic weeks [default: 550].
    #[arg(long, env = "NOWCAST_EPIDEMIC_THRESHOLD")]
    pub epidemic_threshold: Option<f64>,
    /// Weekly count marking high-incidence weeks [default: 4000].
    #[arg(long, env = "NOWCAST_HIGH_THRESHOLD")]
    pub high_threshold: Option<f64>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; missing keys take their defaults.
    #[arg(long, env = "NOWCAST_SCENARIO")]
    pub scenario: Option<PathBuf>,
    #[arg(long, env = "NOWCAST_SEED")]
    pub seed: Option<u64>,
    /// Output directory [default: .].
    #[arg(long, env = "NOWCAST_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long, env = "NOWCAST_LINELIST")]
    pub linelist: Option<PathBuf>,
    /// First week considered [default: first notification week].
    #[arg(long, env = "NOWCAST_START")]
    pub start: Option<String>,
    /// Last week considered [default: last notification week].
    #[arg(long, env = "NOWCAST_END")]
    pub end: Option<String>,
    /// Share of a season's cases in its epidemic period [default: 0.85].
    #[arg(long, env = "NOWCAST_SHARE")]
    pub share: Option<f64>,
    /// Pre-epidemic values kept per season [default: 5].
    #[arg(long, env = "NOWCAST_TOP")]
    pub top: Option<usize>,
    /// One-sided confidence level [default: 0.95].
    #[arg(long, env = "NOWCAST_CONFIDENCE")]
    pub confidence: Option<f64>,
    /// Output directory [default: .].
    #[arg(long, env = "NOWCAST_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DelaysArgs {
    #[arg(long, env = "NOWCAST_LINELIST")]
    pub linelist: Option<PathBuf>,
    #[arg(long, env = "NOWCAST_START")]
    pub start: Option<String>,
    #[arg(long, env = "NOWCAST_END")]
    pub end: Option<String>,
    /// Reported fractions to time, comma separated [default: 0.8,0.95].
    #[arg(long, env = "NOWCAST_FRACTION", value_delimiter = ',')]
    pub fraction: Vec<f64>,
    /// Output directory [default: .].
    #[arg(long, env = "NOWCAST_OUT")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let file = match cli.config.as_deref().map(config::FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return fail(e),
    };
    let res = match cli.command {
        Command::Nowcast(a) => commands::nowcast(a, &file),
        Command::Evaluate(a) => commands::evaluate(a, &file),
        Command::Simulate(a) => commands::simulate(a, &file),
        Command::Threshold(a) => commands::threshold(a, &file),
        Command::Delays(a) => commands::delays(a, &file),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: nowcast_core::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_user_error() { 2 } else { 1 })
}
