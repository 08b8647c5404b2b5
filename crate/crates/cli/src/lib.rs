//! Library side of the `ncycle` command-line tool: argument parsing, config
//! resolution and rendering. The binary is a thin wrapper.
//!
//! Exit status is 0 on success, 1 on an internal invariant breach or I/O
//! failure, and 2 on a usage error.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ncycle_core::montecarlo::Ordering;
use ncycle_core::{Error, InequalityId, ProtocolId};

use config::{pick, pick_parsed, FileConfig};
use output::{Document, Format, OutputSpec, DEFAULT_PRECISION};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "error: {msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnsupportedScenario(_)
            | Error::PairingError { .. }
            | Error::InsufficientRuns { .. }
            | Error::InvalidConfig(_)
            | Error::IndexOutOfRange { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ncycle", version, about = "Sequential N-cycle contextuality games")]
pub struct Cli {
    /// JSON file with default values for any flag
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output encoding: csv or json (JSON Lines for tables)
    #[arg(long, global = true)]
    format: Option<Format>,

    /// Write to this file instead of standard output
    #[arg(long, short, global = true, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Significant digits for CSV floats (1..=17)
    #[arg(long, global = true)]
    precision: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Largest player count that still witnesses a violation, per N
    Table1(Table1Args),
    /// Per-player values on the handle state
    Sequence(SequenceArgs),
    /// Monte Carlo estimate of the per-player values
    Simulate(SimulateArgs),
    /// Noncontextual bounds by enumeration next to the quantum values
    Bounds(BoundsArgs),
    /// Limiting value N/3 and the affine recurrence for every pairing
    Asymptote(AsymptoteArgs),
}

#[derive(Args, Debug)]
struct Table1Args {
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args, Debug)]
struct SequenceArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    protocol: Option<ProtocolId>,
    #[arg(long)]
    ineq: Option<InequalityId>,
    /// Number of players
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    protocol: Option<ProtocolId>,
    #[arg(long)]
    ineq: Option<InequalityId>,
    #[arg(long)]
    players: Option<usize>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// fixed or random
    #[arg(long)]
    ordering: Option<Ordering>,
    /// Add analytic values and z-scores
    #[arg(long)]
    compare: bool,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct AsymptoteArgs {
    #[arg(long)]
    n: Option<usize>,
}

pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("NCYCLE_THREADS") else {
        return Ok(());
    };
    let threads: usize =
        raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
            CliError::Usage(format!("NCYCLE_THREADS must be a positive integer, got '{raw}'"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))
}

/// Resolves flags, config file and defaults, then computes the result.
pub fn prepare(cli: Cli) -> Result<(OutputSpec, Document), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let spec = OutputSpec::new(
        pick_parsed(cli.format, file.format.as_deref(), Format::Csv, "format")?,
        cli.output.clone().or(file.output.clone()),
        pick(cli.precision, file.precision, DEFAULT_PRECISION),
    )?;

    let doc = match cli.command {
        Command::Table1(a) => {
            let n_min = pick(a.n_min, file.n_min, 5);
            let n_max = pick(a.n_max, file.n_max, 19);
            commands::table1(n_min, n_max)?
        }
        Command::Sequence(a) => {
            let n = pick(a.n, file.n, 5);
            let protocol = pick_parsed(a.protocol, file.protocol.as_deref(), ProtocolId::Full, "protocol")?;
            let ineq = pick_parsed(a.ineq, file.ineq.as_deref(), InequalityId::Alpha, "ineq")?;
            let k = pick(a.k, file.k, 20);
            commands::sequence(n, protocol, ineq, k)?
        }
        Command::Simulate(a) => {
            let cfg = ncycle_core::montecarlo::GameConfig::new(
                pick(a.n, file.n, 5),
                pick_parsed(a.protocol, file.protocol.as_deref(), ProtocolId::BOnly, "protocol")?,
                pick_parsed(a.ineq, file.ineq.as_deref(), InequalityId::Beta, "ineq")?,
                pick(a.players, file.players, 4),
                pick(a.runs, file.runs, 100_000),
                pick(a.seed, file.seed, 0),
            )
            .with_ordering(pick_parsed(
                a.ordering,
                file.ordering.as_deref(),
                Ordering::FixedOrder,
                "ordering",
            )?);
            let compare = a.compare || file.compare.unwrap_or(false);
            commands::simulate(&cfg, compare)?
        }
        Command::Bounds(a) => commands::bounds(pick(a.n, file.n, 5))?,
        Command::Asymptote(a) => commands::asymptote(pick(a.n, file.n, 5))?,
    };
    Ok((spec, doc))
}

/// Parses `args` (program name first) and returns the rendered output
/// without writing it anywhere.
pub fn render<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    let (spec, doc) = prepare(cli)?;
    Ok(doc.render(spec.format, spec.precision))
}
