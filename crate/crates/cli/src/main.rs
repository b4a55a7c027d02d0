use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linproc_cli::{plot, run_delta, run_rates, run_verify, with_threads, ExperimentConfig, Outcome, RunError};
use linproc_core::Error;

/// Decomposition checks and Berry–Esseen rate studies for Hilbert-space linear processes.
#[derive(Debug, Parser)]
#[command(name = "linproc", version)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Affects speed only, never results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the machine report to standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact identities, the crucial inequality and the sup-norm bound.
    Verify,
    /// Single-horizon Δ_n study.
    Delta {
        /// Horizon; defaults to the last entry of `n_grid`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Δ_n over `n_grid` with a log-log rate fit.
    Rates,
    /// Re-render rates.svg from a points.csv.
    Plot {
        /// Defaults to `<out>/points.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, PathBuf), RunError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Usage("--config is required for this subcommand".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn execute(cli: &Cli) -> Result<Option<Outcome>, RunError> {
    if let Command::Plot { input } = &cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let input = input.clone().unwrap_or_else(|| out.join("points.csv"));
        plot(&input, &out.join("rates.svg"))?;
        return Ok(None);
    }
    let (cfg, out) = load(cli)?;
    let outcome = with_threads(cli.threads, || match &cli.command {
        Command::Verify => run_verify(&cfg, &out),
        Command::Delta { n } => run_delta(&cfg, &out, *n),
        Command::Rates => run_rates(&cfg, &out),
        Command::Plot { .. } => unreachable!("handled above"),
    })??;
    Ok(Some(outcome))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Some(outcome)) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&outcome.report).expect("report serializes"));
            }
            if !outcome.passed {
                eprintln!("one or more checks failed; see report.json");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let RunError::Core(Error::InsufficientSignal { .. }) = e {
                eprintln!("hint: raise `replicates` so that more horizons clear the noise floor");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
