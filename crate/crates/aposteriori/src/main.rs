use std::path::PathBuf;
use std::process::ExitCode;

use aposteriori::commands::execute;
use aposteriori::{Format, RunConfig, RunError, RunMode};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aposteriori", version, about = "Simulate and check continuous-measurement trajectory ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Counting-detection trajectories and their summary.
    Counting(Common),
    /// Diffusive-detection trajectories and their summary.
    Diffusive(Common),
    /// A-priori master-equation evolution.
    Master(Common),
    /// Characteristic functional by propagation, optionally with Monte Carlo.
    Charfun(Common),
    /// Counting-to-diffusion limit: generator gaps and scaled simulations.
    Limit(Common),
    /// Check the configuration and the model, then exit.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trajectories: Option<u64>,
    /// Simulation step; must divide the grid cell.
    #[arg(long)]
    dt: Option<f64>,
    /// Snapshot stride in grid cells.
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn run(mode: RunMode, c: Common) -> Result<Vec<String>, RunError> {
    let mut cfg = RunConfig::load(&c.config)?;
    cfg.mode = Some(mode);
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = c.trajectories {
        cfg.n_trajectories = n;
    }
    if let Some(dt) = c.dt {
        cfg.dt = Some(dt);
    }
    if let Some(k) = c.snapshot_every {
        cfg.snapshot_every = k;
    }
    if let Some(f) = c.format {
        cfg.format = f;
    }
    execute(&cfg, &c.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Counting(c) => (RunMode::Counting, c),
        Command::Diffusive(c) => (RunMode::Diffusive, c),
        Command::Master(c) => (RunMode::Master, c),
        Command::Charfun(c) => (RunMode::Charfun, c),
        Command::Limit(c) => (RunMode::Limit, c),
        Command::Validate(c) => (RunMode::Validate, c),
    };
    match run(mode, common) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
