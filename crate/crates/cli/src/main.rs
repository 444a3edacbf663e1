use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tailfield_core::{ModelSpec, DEFAULT_SMITH_WINDOW};

mod commands;
mod output;

use commands::CliError;

/// Tail-copula estimation and stationarity testing for functional data.
#[derive(Parser, Debug)]
#[command(name = "tailfield", version)]
struct Cli {
    /// Output format for tables and reports.
    #[arg(
        long,
        global = true,
        value_enum,
        env = "TAILFIELD_FORMAT",
        default_value = "csv"
    )]
    format: Format,

    /// Worker threads for simulation and Monte Carlo replications
    /// (0 = all cores).
    #[arg(long, global = true, env = "TAILFIELD_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a sample from the Smith model or the Pareto process.
    Simulate(SimulateArgs),
    /// Estimate tail copulas, stable tail dependence functions and partial
    /// derivatives from a sample file.
    Estimate(EstimateArgs),
    /// Run the stationarity test on a sample file.
    Test(TestArgs),
    /// Monte Carlo size and power study with plot data.
    Mc(McArgs),
    /// Closed-form tail dependence coefficients, derivatives and the limit
    /// covariance of a model.
    Theory(TheoryArgs),
}

#[derive(Args, Debug)]
pub struct ModelArg {
    #[arg(long, env = "TAILFIELD_MODEL", default_value = "smith", value_parser = parse_model)]
    pub model: ModelSpec,
}

fn parse_model(s: &str) -> Result<ModelSpec, String> {
    s.parse::<ModelSpec>().map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Number of trajectories.
    #[arg(long, env = "TAILFIELD_N")]
    pub n: usize,
    /// Number of grid intervals N; the grid has N + 1 points.
    #[arg(long, env = "TAILFIELD_GRID_N")]
    pub grid_n: usize,
    #[arg(long, env = "TAILFIELD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Distortion of the grid (0 keeps it uniform).
    #[arg(long, env = "TAILFIELD_THETA", default_value_t = 0.0)]
    pub theta: f64,
    /// Half-width A of the simulation window of the Smith model.
    #[arg(long, env = "TAILFIELD_WINDOW", default_value_t = DEFAULT_SMITH_WINDOW)]
    pub window: f64,
    /// Sample CSV to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Metadata JSON to write (defaults to the output path with extension
    /// `.meta.json`).
    #[arg(long)]
    pub metadata: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Sample CSV.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, env = "TAILFIELD_K")]
    pub k: f64,
    /// Evaluation point such as `t=0,3;x=1,1.5` (repeatable).
    #[arg(long = "query", short)]
    pub queries: Vec<String>,
    /// Finite-difference bandwidth (default k^(-1/4)).
    #[arg(long, env = "TAILFIELD_ETA")]
    pub eta: Option<f64>,
    /// Output file (standard output when absent).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TestOptions {
    #[arg(long, env = "TAILFIELD_K")]
    pub k: f64,
    #[arg(long, env = "TAILFIELD_DELTA")]
    pub delta: usize,
    #[arg(long, env = "TAILFIELD_ETA")]
    pub eta: Option<f64>,
    /// Error tolerance of the multivariate normal integration.
    #[arg(long, env = "TAILFIELD_MVN_TOL", default_value_t = 1e-4)]
    pub mvn_tol: f64,
    /// Seed of the randomized lattice rule.
    #[arg(long, env = "TAILFIELD_MVN_SEED")]
    pub mvn_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[command(flatten)]
    pub test: TestOptions,
    /// Treat the sample as observed on the uniform grid {r/N}, whatever
    /// locations its header lists.
    #[arg(long)]
    pub assume_uniform: bool,
    /// JSON report to write.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    pub thetas: Vec<f64>,
    #[arg(long, env = "TAILFIELD_N")]
    pub n: usize,
    #[arg(long, env = "TAILFIELD_GRID_N")]
    pub grid_n: usize,
    #[arg(long, env = "TAILFIELD_REPS")]
    pub reps: usize,
    #[arg(long, env = "TAILFIELD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    pub alphas: Vec<f64>,
    #[arg(long, env = "TAILFIELD_WINDOW", default_value_t = DEFAULT_SMITH_WINDOW)]
    pub window: f64,
    #[command(flatten)]
    pub test: TestOptions,
    /// Directory receiving rates.csv, null_pmf.csv, pp_plot.csv and
    /// summary.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, env = "TAILFIELD_GRID_N")]
    pub grid_n: usize,
    #[arg(long, env = "TAILFIELD_DELTA")]
    pub delta: usize,
    #[arg(long, env = "TAILFIELD_MVN_TOL", default_value_t = 1e-4)]
    pub mvn_tol: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Estimate(a) => commands::estimate(&a, cli.format),
        Command::Test(a) => commands::test(&a, cli.format),
        Command::Mc(a) => commands::mc(&a),
        Command::Theory(a) => commands::theory(&a, cli.format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
