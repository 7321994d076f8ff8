//! `chainreach`: dependency graphs, decomposition plans, reachable tube
//! solves, comparisons, closed-loop simulation, slicing and benchmarks.

mod commands;
mod config;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use chainreach::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{DisturbanceChoice, SimulateArgs};
use config::{CommonArgs, RunConfig};
use run::Mode;

#[derive(Debug)]
pub enum CliError {
    Core(chainreach::Error),
    /// Bad flags, config or manifest contents.
    Usage(String),
    Io(std::io::Error),
}

impl CliError {
    /// 2 validation, 3 numeric failure, 4 resource cap, 1 file system.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Numeric => 3,
                ErrorKind::Resource => 4,
                ErrorKind::Io => 1,
            },
            CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(s) => write!(f, "{s}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<chainreach::Error> for CliError {
    fn from(e: chainreach::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "chainreach", version, about = "Backward reachable tubes by chained subsystem decomposition")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the state dependency graph and write graph.json.
    Graph,
    /// Rank plans for auto:p, or check an explicit plan.
    Plan,
    /// Solve and write checkpoints plus manifest.json.
    Solve {
        #[arg(long, value_enum, default_value_t = Mode::Decomposed)]
        mode: Mode,
    },
    /// Compare an approximation run against a reference run.
    Compare {
        /// Reference run directory or manifest.
        reference: PathBuf,
        /// Approximation run directory or manifest.
        approx: PathBuf,
        /// Time to compare at; defaults to the reference horizon.
        #[arg(long, allow_hyphen_values = true)]
        time: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },
    /// Roll out the optimal controller from given or sampled starts.
    Simulate {
        /// Reuse a solved run instead of solving again.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Decomposed)]
        mode: Mode,
        /// Start state as a comma list. Repeatable.
        #[arg(long = "z0", allow_hyphen_values = true)]
        z0: Vec<String>,
        /// Random starts outside the tube (default 10 when no --z0).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long = "sim-dt", default_value_t = 0.002)]
        sim_dt: f64,
        #[arg(long, value_enum, default_value_t = DisturbanceChoice::Worst)]
        disturbance: DisturbanceChoice,
    },
    /// Fix some coordinates of an RDV1 file and export the rest.
    Slice {
        file: PathBuf,
        /// label=value. Repeatable.
        #[arg(long = "fix", allow_hyphen_values = true)]
        fix: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        rdv: Option<PathBuf>,
    },
    /// Time solves over several grid sizes and fit a log-log slope.
    Bench {
        /// Comma list of points per dimension.
        #[arg(long)]
        ks: String,
        #[arg(long, value_enum, default_value_t = Mode::Decomposed)]
        mode: Mode,
    },
}

fn init_threads(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn configured(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::resolve(common)?;
    init_threads(cfg.threads)?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let common = cli.common;
    match cli.command {
        Command::Graph => commands::graph(&configured(&common)?),
        Command::Plan => commands::plan(&configured(&common)?),
        Command::Solve { mode } => commands::solve_cmd(&configured(&common)?, mode),
        Command::Compare { reference, approx, time, eps } => {
            init_threads(common.threads)?;
            commands::compare(&reference, &approx, time, eps)
        }
        Command::Simulate { from, mode, z0, samples, sim_dt, disturbance } => {
            let mut common = common;
            if common.model.is_none() {
                if let Some(dir) = &from {
                    common.model = Some(run::load_run(dir)?.manifest.model);
                }
            }
            let cfg = configured(&common)?;
            commands::simulate_cmd(&cfg, &SimulateArgs { from, mode, z0, samples, sim_dt, disturbance })
        }
        Command::Slice { file, fix, csv, rdv } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT));
            commands::slice_cmd(&file, &fix, csv.as_deref(), rdv.as_deref(), &out)
        }
        Command::Bench { ks, mode } => commands::bench(&configured(&common)?, &ks, mode),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
