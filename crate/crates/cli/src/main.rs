//! `vn` — vertex-nomination experiments from the command line.
//!
//! `simulate` runs a Monte Carlo study on a block-model source,
//! `nominate` ranks the nonseed vertices of a dataset across a sweep of
//! seed counts, and `diagnostics` reports the separation quantities of
//! an edge-probability matrix. Set `VN_THREADS` to cap the worker pool.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use vn_cli::commands;

#[derive(Parser)]
#[command(
    name = "vn",
    about = "Vertex nomination: simulate, nominate, diagnose",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation study from a JSON config with an sbm source
    Simulate {
        /// Path to the JSON experiment config
        #[arg(long)]
        config: PathBuf,
        /// Override the number of trials in the config
        #[arg(long)]
        trials: Option<usize>,
        /// Override the output directory in the config
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rank nonseed vertices of a dataset across a sweep of seed counts
    Nominate {
        /// Path to the JSON experiment config with a dataset source
        #[arg(long)]
        config: PathBuf,
        /// Which label value (as written in the labels file) is the
        /// block of interest; defaults to the first label, or the
        /// config's interest_block when set
        #[arg(long)]
        interest_block: Option<usize>,
        /// Override the output directory in the config
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print separation diagnostics for an edge-probability matrix
    Diagnostics {
        /// Path to a JSON file holding the matrix as an array of rows
        #[arg(long)]
        lambda: Option<PathBuf>,
        /// Read the matrix from the sbm source of an experiment config
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(value) = std::env::var("VN_THREADS") {
        let threads: usize = value
            .parse()
            .with_context(|| format!("VN_THREADS must be a positive integer, got {value:?}"))?;
        if threads == 0 {
            anyhow::bail!("VN_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run() -> Result<i32> {
    init_threads()?;
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            config,
            trials,
            output,
        } => commands::cmd_simulate(&config, trials, output),
        Command::Nominate {
            config,
            interest_block,
            output,
        } => commands::cmd_nominate(&config, interest_block, output),
        Command::Diagnostics { lambda, config } => {
            commands::cmd_diagnostics(lambda.as_deref(), config.as_deref())
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}
