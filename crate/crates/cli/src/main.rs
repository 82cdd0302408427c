//! `dopamine`: seeded runs of labeling, property checks, training and
//! evaluation.
//!
//! Exit codes: 0 success, 1 property failure, 2 config error, 3 I/O error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::FileConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dopamine", version, about = "Progress labeling, reward shaping and evaluation")]
pub struct Cli {
    /// Flat TOML key-value file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed. Falls back to the config file, then DOPAMINE_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel sections; 1 runs sequentially.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate hop-labeled samples from a trajectory manifest.
    Label(LabelArgs),
    /// Run property suites.
    Verify(VerifyArgs),
    /// Train tabular learners on the gridworld.
    Train(TrainArgs),
    /// VOC and outcome-judgment evaluation.
    Eval(EvalArgs),
    /// Semantic-trap demonstration by exact value iteration.
    Trap(TrapArgs),
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Line-delimited JSON trajectory manifest.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    pub n_hop_bins: Option<usize>,
    #[arg(long)]
    pub n_distance_bins: Option<usize>,
    #[arg(long)]
    pub alpha_zero: Option<f64>,
    #[arg(long)]
    pub zero_hop_epsilon: Option<f64>,
    #[arg(long)]
    pub samples_per_cell: Option<usize>,
    /// View subsets to expand into, e.g. `front;front,wrist`.
    #[arg(long)]
    pub view_subsets: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Comma-separated suites: boundedness, telescoping, q_shift,
    /// invariance, trap, euler. Default: all.
    #[arg(long)]
    pub suite: Option<String>,
    /// `none` or `naive` (naive progress difference in place of shaping).
    #[arg(long)]
    pub mutation: Option<String>,
    #[arg(long)]
    pub boundedness_cases: Option<usize>,
    #[arg(long)]
    pub telescoping_cases: Option<usize>,
    #[arg(long)]
    pub mdp_cases: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Comma-separated reward variants: gold (alias sparse), grm, naive.
    #[arg(long)]
    pub variant: Option<String>,
    /// `q_learning` or `reinforce`.
    #[arg(long)]
    pub algorithm: Option<String>,
    /// Number of seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// `oracle`, `noisy` or `fitted`.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Gaussian noise for the noisy estimator.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// `gated` or `average`.
    #[arg(long)]
    pub tracker: Option<String>,
    #[arg(long)]
    pub episode_cap: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Consistency sensitivity.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trajectory manifest for VOC. Default: the gridworld demonstration.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated densities: sparse, medium, dense.
    #[arg(long)]
    pub density: Option<String>,
    /// Mean-progress threshold separating PSE from FE.
    #[arg(long)]
    pub xi: Option<f64>,
    /// `oracle`, `anti_oracle`, `random` or `grid_oracle`.
    #[arg(long)]
    pub scorer: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrapArgs {
    #[arg(long)]
    pub honeypot_potential: Option<f64>,
    #[arg(long)]
    pub path_risk: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let ctx = commands::Context::new(&cli, &file)?;
    match &cli.command {
        Command::Label(a) => commands::label(&ctx, a, &file),
        Command::Verify(a) => commands::verify(&ctx, a, &file),
        Command::Train(a) => commands::train(&ctx, a, &file),
        Command::Eval(a) => commands::eval(&ctx, a, &file),
        Command::Trap(a) => commands::trap(&ctx, a, &file),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dopamine: {e}");
            e.exit_code()
        }
    }
}
