//! `dynmpi`: simulate → estimate-levels → reconstruct → evaluate, plus
//! `sweep` for whole experiment grids.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
//! 4 sweep finished with failed cells. Set `DYNMPI_LOG` (e.g. `info`) for
//! progress output.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dynmpi", version, about = "Dynamic MPI reconstruction with RESESOP-Kaczmarz")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dynamic dataset from a run configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `seeds.noise` from the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate per-subproblem uncertainty levels.
    EstimateLevels {
        #[arg(long)]
        data: PathBuf,
        /// norm, interp or prior-recon
        #[arg(long)]
        method: String,
        /// Subproblem size as a frame fraction: 1, 1/2, ..., 1/32 (or 0.25).
        #[arg(long, default_value = "1")]
        subsize: String,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Relative multiplicative noise on each level, e.g. 0.15.
        #[arg(long, default_value_t = 0.0)]
        zeta_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tikhonov parameter of the prior reconstructions (prior-recon only).
        #[arg(long, default_value_t = dynmpi::inexactness::DEFAULT_RHO_LAMBDA)]
        prior_lambda: f64,
        #[arg(long, default_value_t = 5)]
        prior_iters: usize,
        /// Defaults to the middle frame.
        #[arg(long)]
        reference_frame: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the state at the start of a reference frame.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        /// reg-kaczmarz, sesop or resesop
        #[arg(long)]
        algo: String,
        /// Levels CSV (required for resesop).
        #[arg(long)]
        levels: Option<PathBuf>,
        /// Tikhonov parameter (required for reg-kaczmarz).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value = "1")]
        subsize: String,
        #[arg(long)]
        sweeps: Option<usize>,
        /// Defaults to the middle frame.
        #[arg(long)]
        reference_frame: Option<usize>,
        #[arg(long)]
        no_positivity: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a reconstruction (or a dataset's ground truth) with a dataset.
    Evaluate {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate and run the configuration's `experiment` grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DYNMPI_LOG", "warn")).init();
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().collect();
    match commands::run(cli.command, &args) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
