//! `eigensafe` command-line entry point.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use run::CliError;

#[derive(Parser, Debug)]
#[command(name = "eigensafe", version, about = "Dominant-eigenpair safety analysis, training and filtering")]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory. Artifacts are staged and moved here on success.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenpair and exact survival curves of a gridworld map.
    ToyEigen(ToyEigenArgs),
    /// Offline transition dataset from uniform states and actions.
    Collect(CollectArgs),
    /// Joint eigenvalue, eigenfunction and backup-policy training.
    Train(TrainArgs),
    /// Learned values on a state grid, with set diagnostics.
    EvalGrid(EvalGridArgs),
    /// Paired filtered and unfiltered rollouts.
    FilterEval(FilterEvalArgs),
    /// Discounted reachability value iteration on the gridded double integrator.
    BaselineHj(BaselineArgs),
    /// Finite-difference check of every training loss.
    Gradcheck(GradcheckArgs),
    /// Grid-discretised dominant eigenvalue with greedy policy improvement.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
pub struct ToyEigenArgs {
    /// Map file; the shipped 5x5 example when omitted.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CollectArgs {
    /// `dint` or `dubins`.
    #[arg(long)]
    pub env: Option<String>,
    /// Number of transitions.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub env: Option<String>,
    /// Dataset CSV written by `collect`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalGridArgs {
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Grid points per position axis.
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FilterEvalArgs {
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Threshold on φ; `inf` runs the backup policy alone.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// `random` or `constant:<a0,...>`.
    #[arg(long = "ref")]
    pub reference: Option<String>,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    /// Cells per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Discount factor of the reachability backup.
    #[arg(long)]
    pub discount: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub env: Option<String>,
    /// Cells per state axis, one value or a comma list.
    #[arg(long)]
    pub resolution: Option<String>,
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

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut ctx = run::RunContext::new(cli.config.as_deref(), cli.seed, &cli.out)?;
    match cli.command {
        Command::ToyEigen(a) => commands::toy_eigen(&mut ctx, a),
        Command::Collect(a) => commands::collect(&mut ctx, a),
        Command::Train(a) => commands::train(&mut ctx, a),
        Command::EvalGrid(a) => commands::eval_grid(&mut ctx, a),
        Command::FilterEval(a) => commands::filter_eval(&mut ctx, a),
        Command::BaselineHj(a) => commands::baseline_hj(&mut ctx, a),
        Command::Gradcheck(a) => commands::gradcheck(&mut ctx, a),
        Command::Oracle(a) => commands::oracle(&mut ctx, a),
    }
}
