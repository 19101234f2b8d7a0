//! Command-line front end for the LERW simulation library.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "lerw", version, about = "Loop-erased random walk and lattice capacity simulations")]
pub struct Cli {
    /// Master seed; when absent an entropy seed is drawn and printed to stderr
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Worker threads (0 = all cores); the flag wins over LERW_THREADS
    #[arg(long, global = true, value_name = "INT", env = "LERW_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Sample a simple random walk, its loop erasure, or an infinite LERW
    Walk(WalkArgs),
    /// Estimate the capacity of a point set or of a sampled LERW
    #[command(after_help = CAPACITY_HELP)]
    Capacity(CapacityArgs),
    /// Exact finite-chain checks
    Oracle(OracleArgs),
    /// Two-sided LERW samples, acceptance rates and diagnostics
    Twosided(TwosidedArgs),
    /// Run an experiment from a config file
    #[command(after_help = EXPERIMENT_HELP)]
    Experiment(ExperimentArgs),
}

const CAPACITY_HELP: &str = "\
Output: one JSON object per line on stdout.
CSV columns (--csv): method,value,stderr,trials,R,seed,wall_time
  method     estimator name
  value      capacity estimate
  stderr     standard error of value
  trials     walks used
  R          truncation radius (mc, sampled, decomposition) or start radius (hitting, wos)
  seed       master seed
  wall_time  seconds";

const EXPERIMENT_HELP: &str = "\
Config: one `key = value` per line, `#` comments. Keys: experiment, dimension,
ladder (comma list or 2^a..2^b), replicates, walks, seed, output_dir, and the
experiment's method parameters (see --list-params).
Outputs in the output directory:
  <experiment>_replicates.csv  one row per replicate; columns are documented in
                               the header and always include n (or delta),
                               replicate, master_seed, stream_id
  <experiment>_<table>.csv     secondary tables
  <experiment>_<plot>.dat      two-column plot data with a header line
  <experiment>_summary.json    summary, checks, config and provenance";

#[derive(Args, Debug, Serialize)]
pub struct WalkArgs {
    /// Lattice dimension
    #[arg(long, value_name = "INT", default_value_t = 3)]
    pub d: usize,
    /// Number of walk steps (with --infinite: steps of the LERW)
    #[arg(long, value_name = "INT")]
    pub steps: usize,
    /// Emit the loop erasure of the walk instead of the walk
    #[arg(long)]
    pub loop_erase: bool,
    /// Emit the first steps of an infinite LERW (d >= 3)
    #[arg(long, conflicts_with = "loop_erase")]
    pub infinite: bool,
    /// Emit the cut times of the walk, one per line, instead of points
    #[arg(long, conflicts_with_all = ["loop_erase", "infinite"])]
    pub cut_times: bool,
    /// Output file (default stdout)
    #[arg(long, value_name = "PATH")]
    pub out: Option<std::path::PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CapMethod {
    /// Escape sum with per-point walks
    Mc,
    /// Escape sum from uniformly chosen members
    Sampled,
    /// Ordered decomposition
    Decomposition,
    /// Far-field hitting from a sphere
    Hitting,
    /// Far-field hitting with walk-on-spheres jumps
    Wos,
}

#[derive(Args, Debug, Serialize)]
pub struct CapacityArgs {
    /// Lattice dimension (3..=6)
    #[arg(long, value_name = "INT", default_value_t = 3)]
    pub d: usize,
    /// Point set: single-origin, pair (origin and e1), or a file with one point per line
    #[arg(long, value_name = "SPEC", conflicts_with = "lerw")]
    pub points: Option<String>,
    /// Use a sampled LERW with this many steps as the set
    #[arg(long, value_name = "INT")]
    pub lerw: Option<usize>,
    /// Estimator
    #[arg(long, value_enum, default_value_t = CapMethod::Mc)]
    pub method: CapMethod,
    /// Truncation radius for mc, sampled and decomposition
    #[arg(long = "R", value_name = "FLOAT", default_value_t = 200.0)]
    pub r: f64,
    /// Start radius for hitting and wos (default: twice the set radius plus 4)
    #[arg(long, value_name = "FLOAT")]
    pub y_radius: Option<f64>,
    /// Walks per point (mc, decomposition) or in total (sampled, hitting, wos)
    #[arg(long, value_name = "INT", default_value_t = 100_000)]
    pub trials: u64,
    /// Append a CSV row to this file (header written when the file is new)
    #[arg(long, value_name = "PATH")]
    pub csv: Option<std::path::PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Capacity against the ordered decomposition on random symmetric chains
    Decomposition,
}

#[derive(Args, Debug, Serialize)]
pub struct OracleArgs {
    /// Randomized identity suite to run
    #[arg(long, value_enum, default_value_t = Suite::Decomposition, conflicts_with = "chain")]
    pub suite: Suite,
    /// Number of random chains
    #[arg(long, value_name = "INT", default_value_t = 1000)]
    pub chains: usize,
    /// Largest number of states per chain
    #[arg(long, value_name = "INT", default_value_t = 50)]
    pub max_states: usize,
    /// Largest subset size
    #[arg(long, value_name = "INT", default_value_t = 8)]
    pub max_set: usize,
    /// Random orderings per subset
    #[arg(long, value_name = "INT", default_value_t = 3)]
    pub orderings: usize,
    /// Largest accepted deviation
    #[arg(long, value_name = "FLOAT", default_value_t = 1e-10)]
    pub tolerance: f64,
    /// Instead of the suite, evaluate this chain file (header n, then `i j p` triplets)
    #[arg(long, value_name = "PATH")]
    pub chain: Option<std::path::PathBuf>,
    /// Ordered states for --chain, comma separated (default: all states)
    #[arg(long, value_name = "LIST", requires = "chain")]
    pub set: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TwosidedMode {
    /// Dump accepted samples (d >= 5)
    Sample,
    /// Acceptance rate over a fixed number of attempts (d >= 5)
    Acceptance,
    /// Exact acceptance of the pure-horizon rule by enumeration (d >= 5)
    Exact,
    /// Shift-invariance chi-square tests (d >= 5)
    Diagnostics,
    /// Weighted forward sides with the rescaled escape estimates (d = 4)
    Weighted,
}

#[derive(Args, Debug, Serialize)]
pub struct TwosidedArgs {
    /// Lattice dimension
    #[arg(long, value_name = "INT", default_value_t = 5)]
    pub d: usize,
    /// What to compute
    #[arg(long, value_enum, default_value_t = TwosidedMode::Sample)]
    pub mode: TwosidedMode,
    /// Steps kept on each side
    #[arg(long, value_name = "INT", default_value_t = 64)]
    pub side: usize,
    /// Minimum steps of each walk before acceptance (default: side)
    #[arg(long, value_name = "INT")]
    pub horizon: Option<usize>,
    /// Samples (sample, diagnostics, weighted) or attempts (acceptance)
    #[arg(long, value_name = "INT", default_value_t = 100)]
    pub samples: usize,
    /// Shifts tested by diagnostics, comma separated
    #[arg(long, value_name = "LIST", default_value = "0,1,5,25")]
    pub shifts: String,
    /// Walks per escape estimate (weighted)
    #[arg(long, value_name = "INT", default_value_t = 400)]
    pub walks: u64,
    /// Order of the importance weight (weighted)
    #[arg(long, value_name = "INT", default_value_t = 4096)]
    pub n_weight: usize,
    /// Output file for dumped samples (default stdout)
    #[arg(long, value_name = "PATH")]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ExperimentArgs {
    /// Config file
    #[arg(long, value_name = "PATH", required_unless_present_any = ["kind", "list_params"])]
    pub config: Option<std::path::PathBuf>,
    /// Start from the defaults of this experiment instead of a file
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    pub kind: Option<String>,
    /// Override a config key, as key=value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides output_dir; default: current directory)
    #[arg(long, value_name = "PATH")]
    pub out: Option<std::path::PathBuf>,
    /// Print the method parameters of every experiment and exit
    #[arg(long)]
    pub list_params: bool,
    /// Exit with status 2 when any check fails
    #[arg(long)]
    pub strict: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
