use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use taskweight::cli::{self, CliError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Generate the configured synthetic dataset as CSV (--out FILE).
    GenData,
    /// STL baselines vs MTL strategies; writes delta_m.csv, weights.csv, summary.txt (--out DIR).
    Compare,
    /// Run the learning-dynamics simulator; writes trajectory.csv (--out DIR).
    Simulate,
    /// Plot weight trajectories of a weights log (--data CSV) as SVG (--out FILE).
    Plot,
    /// Relative MTL-vs-STL loss differences for a `task,mtl_loss,stl_loss` table (--data CSV).
    DeltaM,
}

#[derive(Debug, Parser)]
#[command(name = "taskweight", version, about = "Dynamic task weighting for multi-task learning")]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input data file (dataset CSV, weights log or loss table).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn require(p: &Option<PathBuf>, flag: &str, cmd: &str) -> Result<PathBuf, CliError> {
    p.clone()
        .ok_or_else(|| CliError::Config(format!("{cmd} requires {flag}")))
}

fn run(args: &Args) -> Result<String, CliError> {
    let config = args.config.as_deref();
    match args.command {
        Command::GenData => cli::cmd_gen_data(config, &require(&args.out, "--out", "gen-data")?, args.seed),
        Command::Compare => cli::cmd_compare(config, args.data.as_deref(), args.out.as_deref(), args.seed),
        Command::Simulate => cli::cmd_simulate(config, args.out.as_deref(), args.seed),
        Command::Plot => cli::cmd_plot(
            &require(&args.data, "--data", "plot")?,
            &require(&args.out, "--out", "plot")?,
        ),
        Command::DeltaM => cli::cmd_delta_m(&require(&args.data, "--data", "delta-m")?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TASKWEIGHT_LOG", "warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
