use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use horizon_lab_cli::{load_config, resolve_threads, run_experiment, CliError, RunOptions, THREADS_ENV};

#[derive(Parser)]
#[command(name = "horizon-lab", version, about = "Run horizon-stability experiments from a JSON config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV files and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Evaluate on paths independent of the calibration sample.
        #[arg(long)]
        fresh_paths: bool,
        /// Worker threads (falls back to HORIZON_LAB_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            fresh_paths,
            threads,
        } => (|| {
            let env = std::env::var(THREADS_ENV).ok();
            let threads = resolve_threads(threads, env.as_deref())?;
            let cfg = load_config(&config)?;
            let manifest = run_experiment(&cfg, &RunOptions { fresh_paths, threads })?;
            for a in &manifest.artifacts {
                println!("{}  {}", a.sha256, cfg.output_dir.join(&a.file).display());
            }
            Ok::<_, CliError>(())
        })(),
        Command::Validate { config } => load_config(&config).and_then(|c| c.validate()).map(|v| {
            println!("{}: valid {} config", config.display(), v.config.experiment.name());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
