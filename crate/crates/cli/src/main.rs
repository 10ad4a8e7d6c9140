//! `racer`: generate synthetic car-following data, calibrate OVRV, train
//! NN/PINN/RACER models, simulate closed-loop rollouts, audit rational driving
//! constraints and tabulate results.

mod commands;
mod config;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "racer", version, about = "Car-following models with rational driving constraints")]
struct Cli {
    /// Seed for noise, data shuffling and parameter initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// JSON file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic lead/follower trajectory.
    Gen(GenArgs),
    /// Fit OVRV parameters to a trajectory.
    Calibrate(CalibrateArgs),
    /// Train an NN, PINN or RACER model.
    Train(TrainArgs),
    /// Closed-loop rollout of a model against a trajectory's lead vehicle.
    Simulate(ModelArgs),
    /// Count rational-driving-constraint violations of a model on a trajectory.
    Audit(AuditArgs),
    /// Tabulate rollout RMSEs and violation rates of several runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// oscillatory, low_speed_steps, high_speed_steps or dips.
    #[arg(long)]
    kind: Option<String>,
    /// Seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Standard deviation of the follower's acceleration noise, m/s².
    #[arg(long)]
    noise: Option<f64>,
    /// Ground-truth follower: min-gap or max-gap.
    #[arg(long)]
    params: Option<String>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Trajectory CSV.
    #[arg(long)]
    data: PathBuf,
    /// Simplex iterations per restart.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Trajectory CSV.
    #[arg(long)]
    data: PathBuf,
    /// nn, pinn or racer.
    #[arg(long)]
    model: Option<String>,
    /// calibration.json from `calibrate`; required for pinn.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// RDC penalty weights as `l1,l2,l3`.
    #[arg(long)]
    lambda: Option<String>,
    /// Data weight of the physics-informed loss.
    #[arg(long, conflicts_with = "select_alpha")]
    alpha: Option<f64>,
    /// Choose the physics-informed weight on the validation split.
    #[arg(long)]
    select_alpha: bool,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    lstm_layers: Option<usize>,
    #[arg(long)]
    lstm_hidden: Option<usize>,
    #[arg(long)]
    seq_head: Option<usize>,
    /// Hidden widths of the physics branch as `w1,w2,...`.
    #[arg(long)]
    phy_hidden: Option<String>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Trajectory CSV.
    #[arg(long)]
    data: PathBuf,
    /// Model directory written by `train`.
    #[arg(long, required_unless_present = "calibration", conflicts_with = "calibration")]
    checkpoint: Option<PathBuf>,
    /// calibration.json written by `calibrate`, to use the OVRV model.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Violations are flagged beyond this margin.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// `label=dir` of a `simulate` output; repeatable.
    #[arg(long = "sim", value_name = "LABEL=DIR")]
    sims: Vec<String>,
    /// `label=dir` of an `audit` output; repeatable.
    #[arg(long = "audit", value_name = "LABEL=DIR")]
    audits: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if config::is_validation(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
