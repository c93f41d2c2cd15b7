use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcbf::commands;
use pcbf::{CliError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "pcbf", version, about = "Distributional critics trained with path-coupled Bellman flows")]
struct Cli {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Replaces the config's seed list with a single seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a transition dataset.
    GenData,
    /// Train a critic on the dataset in the output directory.
    Train,
    /// Score a checkpoint against ground truth.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Train every λ and baseline coefficient of the sweep grid.
    Sweep,
    /// Run the closed-form and Monte Carlo theory checks.
    VerifyTheory,
    /// Measure the corrected one-step residual of a checkpoint.
    Residual {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let out: &Path = &cli.out;
    match &cli.command {
        Command::GenData => {
            let s = commands::gen_data(&cfg, out)?;
            println!("{}", serde_json::to_string(&s).map_err(|e| CliError::json(out, e))?);
        }
        Command::Train => {
            let s = commands::train(&cfg, out)?;
            println!("{}", serde_json::to_string(&s).map_err(|e| CliError::json(out, e))?);
        }
        Command::Eval { checkpoint } => {
            let r = commands::eval(&cfg, out, checkpoint.as_deref())?;
            println!("{}", serde_json::to_string(&r).map_err(|e| CliError::json(out, e))?);
        }
        Command::Sweep => {
            let results = commands::sweep(&cfg, out)?;
            let failed = results.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} runs, {failed} failed", results.len());
        }
        Command::VerifyTheory => {
            let r = commands::verify_theory(&cfg, out)?;
            println!("{} checks passed", r.checks.len());
        }
        Command::Residual { checkpoint } => {
            let r = commands::residual(&cfg, out, checkpoint.as_deref())?;
            println!("{}", serde_json::to_string(&r).map_err(|e| CliError::json(out, e))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
