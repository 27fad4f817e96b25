//! `funsub` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or output error,
//! 4 numerical failure.

mod commands;
mod config;
mod error;
mod output;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::{CliError, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "funsub",
    version,
    about = "Penalized functional regression with optimal subsampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the full data; writes fit.json and beta.csv
    Fit(RunConfig),
    /// Subsample estimator; writes fit.json, beta.csv, diagnostics.json
    SubsampleFit(RunConfig),
    /// Simulation study; writes metrics.csv and summary.json
    Simulate(RunConfig),
    /// Bootstrap percentile bands; writes bands.csv
    Bootstrap(RunConfig),
    /// Sampling probabilities; writes probabilities.csv, histogram.csv, diagnostics.json
    Probs(RunConfig),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (flags, cmd): (RunConfig, fn(&RunConfig) -> Result<_, CliError>) = match cli.command {
        Command::Fit(c) => (c, commands::cmd_fit),
        Command::SubsampleFit(c) => (c, commands::cmd_subsample_fit),
        Command::Simulate(c) => (c, commands::cmd_simulate),
        Command::Bootstrap(c) => (c, commands::cmd_bootstrap),
        Command::Probs(c) => (c, commands::cmd_probs),
    };
    let cfg = RunConfig::resolve(flags)?;
    if let Some(threads) = cfg.threads()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    for path in cmd(&cfg)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
