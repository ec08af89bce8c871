use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scors::harness::{run_experiment, ConfigDocument, HarnessError};

#[derive(Parser)]
#[command(
    name = "scors",
    version,
    about = "SGD with random search directions: experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the experiment type.
        #[arg(long)]
        experiment: Option<String>,
    },
}

fn run(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    experiment: Option<String>,
) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&config).map_err(|e| {
        HarnessError::Validation(format!("cannot read config {}: {e}", config.display()))
    })?;
    let mut doc = ConfigDocument::parse(&text)?;
    if let Some(seed) = seed {
        doc.set("seed", seed.to_string())?;
    }
    if let Some(out) = out {
        doc.set("out", out.to_string_lossy())?;
    }
    if let Some(experiment) = experiment {
        doc.set("experiment", experiment)?;
    }
    let cfg = doc.resolve()?;
    let artifacts = run_experiment(&cfg)?;
    for (k, v) in &artifacts.summary {
        if k.starts_with("warning.") {
            eprintln!("warning: {v}");
        }
    }
    for (k, v) in &artifacts.summary {
        println!("{k} = {v}");
    }
    println!("output = {}", artifacts.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            experiment,
        } => run(config, seed, out, experiment),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
