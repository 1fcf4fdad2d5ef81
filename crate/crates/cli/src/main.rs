//! `robust-rmdp`: experiment runner for robust planning, offline data
//! generation, RFQI/FQI training, evaluation and diagnostics.
//!
//! Exit codes: 0 ok, 1 input error, 2 non-convergence, 3 property failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "robust-rmdp", version, about = "Robust RL on tabular RMDPs with TV uncertainty")]
struct Cli {
    /// Worker threads for the parallel sweeps.
    #[arg(long, global = true, env = "ROBUST_RMDP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON object of defaults for this command's flags (flags win).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark model to `rmdp.json`.
    Benchmark(BenchmarkArgs),
    /// Exact robust (or nominal) planning.
    Solve(SolveArgs),
    /// Sample an offline dataset from a model's nominal kernel.
    GenData(GenDataArgs),
    /// Run RFQI or FQI on a dataset.
    Train(TrainArgs),
    /// Nominal and robust return of a policy.
    Eval(EvalArgs),
    /// Nominal return of a policy along a benchmark parameter.
    Sweep(SweepArgs),
    /// Estimate concentrability, completeness and dual realizability.
    Diagnose(DiagnoseArgs),
    /// Compare the dual solver with the primal transport on random problems.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    /// chain, gridworld or risky-safe.
    #[arg(long)]
    pub name: Option<String>,
    /// Family parameter as `key=value`; repeatable.
    #[arg(long = "param")]
    pub params: Vec<String>,
}

#[derive(Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub rmdp: Option<PathBuf>,
    /// Override the model's radius.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Classical value iteration under the nominal kernel.
    #[arg(long)]
    pub nonrobust: bool,
}

#[derive(Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub rmdp: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sampling distribution as a JSON `[[f64]]` file; uniform when absent.
    #[arg(long)]
    pub mu_file: Option<PathBuf>,
    /// Use the smoothed occupancy of this policy as the sampling distribution.
    #[arg(long, conflicts_with = "mu_file")]
    pub mu_policy: Option<PathBuf>,
    #[arg(long)]
    pub mu_eps: Option<f64>,
    /// One weighted transition per reachable triple instead of samples.
    #[arg(long)]
    pub exhaustive: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Rfqi,
    Fqi,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "rfqi")]
    pub algo: Algo,
    /// Dataset in JSONL form.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model file; only its shape, discount and fail state are read.
    #[arg(long)]
    pub rmdp: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long = "k")]
    pub k_iters: Option<usize>,
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restart every dual ERM from zero weights.
    #[arg(long)]
    pub cold_start: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub rmdp: Option<PathBuf>,
    /// Policy JSON, or a training result holding one.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long = "param")]
    pub params: Vec<String>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub knob: Option<String>,
    /// Comma-separated knob values.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub rmdp: Option<PathBuf>,
    /// Take the sampling distribution from this dataset's header.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, conflicts_with = "data")]
    pub mu_file: Option<PathBuf>,
    /// Feature spec JSON for F, e.g. `{"kind":"one-hot"}`.
    #[arg(long)]
    pub features: Option<String>,
    /// Feature spec JSON for G; defaults to the F features.
    #[arg(long)]
    pub dual_features: Option<String>,
    #[arg(long)]
    pub policies: Option<usize>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Failure modes mapped onto exit codes.
#[derive(Debug)]
pub enum Outcome {
    Ok,
    NotConverged,
    PropertyFailure,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are input errors; exit 2 is reserved for non-convergence
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Solve(a) => commands::solve(a),
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Ok(Outcome::PropertyFailure) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
