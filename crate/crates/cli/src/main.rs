//! `mass`: train scalar scientists, analyze what they learned, roll them out.

mod analyze;
mod config;
mod exit;
mod generate;
mod output;
mod report;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;

const DEFAULT_OUT: &str = "mass_out";

#[derive(Parser, Debug)]
#[command(
    name = "mass",
    version,
    about = "Multi-system scalar scientists: train, analyze, simulate",
    long_about = "Multi-system scalar scientists: train, analyze, simulate.\n\n\
        Settings come from an optional TOML config file (--config); flags override it. \
        The output root is --out, else $MASS_OUT, else the config's `output`, else ./mass_out.\n\n\
        Exit codes: 0 success, 1 usage error, 2 data or domain error, 3 numerical failure."
)]
struct Cli {
    /// TOML experiment config; flags override its values
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output root directory
    #[arg(long, global = true, env = "MASS_OUT", value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: available parallelism)
    #[arg(short, long, global = true)]
    jobs: Option<usize>,

    /// Skip SVG figures
    #[arg(long, global = true)]
    no_plots: bool,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write sampled training batches as CSV, one file per system
    Generate(GenerateArgs),
    /// Train every seed through the curriculum and write run records
    Sweep(SweepArgs),
    /// Run interpretability analyses over a sweep directory
    Analyze(AnalyzeArgs),
    /// Roll out a trajectory with the analytic or a learned field
    Simulate(SimulateArgs),
    /// Summarize a sweep and its analyses as Markdown
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Systems to sample (comma separated; default all)
    #[arg(long, value_delimiter = ',')]
    systems: Vec<String>,
    /// Samples per system
    #[arg(short = 'n', long)]
    samples: Option<usize>,
    /// Sampling seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Sweep name; the directory is <out>/sweeps/<name>
    #[arg(long)]
    name: Option<String>,
    /// Seed list (comma separated)
    #[arg(long, value_delimiter = ',', conflicts_with = "seed_range")]
    seeds: Option<Vec<u64>>,
    /// Seed range START..END (half-open) or START..=END
    #[arg(long)]
    seed_range: Option<String>,
    /// Systems in curriculum order (comma separated)
    #[arg(long, value_delimiter = ',')]
    curriculum: Vec<String>,
    /// Training steps per phase
    #[arg(long)]
    steps: Option<usize>,
    /// Samples per system per step
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Sweep directory, or a sweep name under <out>/sweeps
    sweep: PathBuf,
    /// Analyses to run (comma separated; default all):
    /// significance, correlation, strip, pca, theory, reference, distill
    #[arg(long, value_delimiter = ',')]
    analyses: Vec<String>,
    /// Seed for single-run figures (default: lowest in the sweep)
    #[arg(long)]
    seed: Option<u64>,
    /// Random-term control fits per seed in the distillation table
    #[arg(long)]
    controls: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Field {
    /// Ground-truth equations of motion
    Analytic,
    /// The learned scalar and head of a stored run
    Mass,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// System to integrate
    #[arg(long)]
    system: String,
    /// Stored run directory (required for the learned field)
    #[arg(long)]
    run: Option<PathBuf>,
    /// Phase of the run to use (default: last phase containing the system)
    #[arg(long)]
    phase: Option<usize>,
    /// Vector field (default: mass with --run, analytic otherwise)
    #[arg(long, value_enum)]
    field: Option<Field>,
    /// Initial positions (comma separated; default per system)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x: Option<Vec<f64>>,
    /// Initial velocities (comma separated; default per system)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    y: Option<Vec<f64>>,
    /// Step size
    #[arg(long, default_value_t = mass_core::sim::DEFAULT_DT, allow_negative_numbers = true)]
    dt: f64,
    /// Number of steps
    #[arg(long, default_value_t = 1000)]
    steps: usize,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Sweep directory, or a sweep name under <out>/sweeps
    sweep: PathBuf,
}

/// Settings shared by every command after merging file and flags.
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub plots: bool,
}

impl Context {
    /// A sweep argument is a path if it exists, else a name under the root.
    pub fn sweep_dir(&self, arg: &std::path::Path) -> PathBuf {
        if arg.exists() {
            arg.to_path_buf()
        } else {
            self.out.join("sweeps").join(arg)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    config.validate()?;
    if let Some(n) = config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the worker pool")?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let plots = config.plots.enabled && !cli.no_plots;
    let mut ctx = Context { config, out, plots };
    match cli.command {
        Command::Generate(a) => generate::run(&mut ctx, a),
        Command::Sweep(a) => sweep::run(&mut ctx, a),
        Command::Analyze(a) => analyze::run(&mut ctx, a),
        Command::Simulate(a) => simulate::run(&ctx, a),
        Command::Report(a) => report::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::exit_code(&e))
        }
    }
}
