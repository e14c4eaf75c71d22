//! Command-line front end and file formats for `asgd-core`.

pub mod commands;
pub mod error;
pub mod format;
pub mod io;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult, ErrorKind};
use output::Format;

#[derive(Debug, Parser)]
#[command(name = "asgd", version, about = "Sketch-and-project SGD: rates, solvers and asynchronous simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral profile of W for a system and sketch distribution (JSON).
    Analyze(AnalyzeArgs),
    /// Smallest processor count at which the asynchronous bound beats the
    /// synchronous complexity.
    MinTau(MinTauArgs),
    /// Optimal asynchronous and synchronous complexities and their τ → ∞
    /// limits.
    Rates(RatesArgs),
    /// Run the basic or synchronous-parallel method and write its trace.
    Solve(SolveArgs),
    /// Simulate the asynchronous master-worker method and compare with the
    /// bound.
    Simulate(SimulateArgs),
    /// Evaluate the complexity bound U on a (θ, ω) grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// Matrix A (CSV, no header). Defaults to the 2x2 identity system.
    #[arg(long = "A", value_name = "CSV")]
    pub a: Option<PathBuf>,
    /// Right-hand side b (single-column CSV).
    #[arg(long = "b", value_name = "CSV")]
    pub b: Option<PathBuf>,
    /// Geometry B (CSV) or `identity`.
    #[arg(long = "B", value_name = "CSV|identity")]
    pub geometry: Option<String>,
    /// Sketch distribution (JSON). Defaults to uniform coordinate sketches.
    #[arg(long, value_name = "JSON")]
    pub dist: Option<PathBuf>,
    /// Monte Carlo samples for E[Z] with Gaussian sketches.
    #[arg(long, default_value_t = 20_000)]
    pub mc: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// Smallest nonzero eigenvalue of W; with --lambda-max, skips the system.
    #[arg(long, requires = "lambda_max", allow_negative_numbers = true)]
    pub lambda_min: Option<f64>,
    /// Largest eigenvalue of W.
    #[arg(long, requires = "lambda_min", allow_negative_numbers = true)]
    pub lambda_max: Option<f64>,
    #[command(flatten)]
    pub system: SystemArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the Monte Carlo estimate of E[Z].
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// λ_min⁺ ∈ {1e-1, 1e-2, 1e-3, 1e-4, 2e-1}, λ_max = 1 − λ_min⁺.
    Case1,
    /// λ_min⁺ ∈ {1e-2, …, 1e-5}, λ_max ∈ {0.4, 0.3, 0.27, 0.26}.
    Case2,
}

#[derive(Debug, Clone, Args)]
pub struct MinTauArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Speed ratio(s) c ≥ 1; comma separated or repeated. Defaults to 1, or
    /// to 1, 1.5 and 2 with a preset.
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    /// Largest τ searched.
    #[arg(long, default_value_t = 20_000)]
    pub tau_max: u32,
    /// Emit every row of a preset spectral grid instead of one profile.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RatesArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Number of processors.
    #[arg(long, required_unless_present = "asymptotic")]
    pub tau: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Report only the τ → ∞ limits.
    #[arg(long)]
    pub asymptotic: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Basic,
    Parallel,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_enum, default_value_t = Method::Basic)]
    pub method: Method,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// Samples averaged per parallel step.
    #[arg(long, default_value_t = 1)]
    pub tau: u32,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Record every `stride` steps.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    /// Deterministic weighted round robin.
    RoundRobin,
    /// Seeded random interleaving with the same per-interval counts.
    Random,
    /// Every update sees the latest iterate.
    NoDelay,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 2)]
    pub tau: usize,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 20)]
    pub intervals: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::RoundRobin)]
    pub schedule: ScheduleArg,
    /// Also write the event-level trace (CSV) here.
    #[arg(long, value_name = "CSV")]
    pub events: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// δ_a = cτ.
    #[arg(long, default_value_t = 2)]
    pub tau: u32,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// θ x ω grid size.
    #[arg(long, default_value = "100x100", value_parser = parse_grid)]
    pub grid: (usize, usize),
    /// Upper end of the ω grid (default 1.5 ω⋆).
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (n, m) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NxM, got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v >= 2)
            .ok_or_else(|| format!("grid sizes must be integers ≥ 2, got {s:?}"))
    };
    Ok((parse(n)?, parse(m)?))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze(a) => commands::analyze(&a),
        Command::MinTau(a) => commands::min_tau(&a),
        Command::Rates(a) => commands::rates(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    }
}
