//! Experiment runner for `horizon-lab`: reads a JSON configuration, drives
//! the library, and writes CSV artifacts with a manifest of their hashes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;
use std::time::Instant;

use thiserror::Error;

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{parse_config, ExperimentConfig, ExperimentKind, Validated};
pub use output::{Artifact, ArtifactRecord, RunManifest, MANIFEST_FILE};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "HORIZON_LAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),
    #[error("computation failed: {0}")]
    Computation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Computation(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub fresh_paths: bool,
    /// Worker threads; the rayon default when `None`.
    pub threads: Option<usize>,
}

/// Resolve the thread count from the flag, then the environment.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>, CliError> {
    let n = match (flag, env) {
        (Some(n), _) => Some(n),
        (None, Some(s)) if !s.trim().is_empty() => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Validation(vec![format!("{THREADS_ENV}: {s:?} is not a thread count")]))?,
        ),
        _ => None,
    };
    if n == Some(0) {
        return Err(CliError::Validation(vec!["threads: must be at least 1".into()]));
    }
    Ok(n)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Compute all artifacts without writing anything.
pub fn compute(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<Artifact>, CliError> {
    let validated = config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Computation(e.to_string()))?;
    pool.install(|| experiments::run(&validated, opts.fresh_paths))
}

/// Validate, compute, and write the artifacts plus `manifest.json` into the
/// configured output directory.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let artifacts = compute(config, opts)?;
    let threads = opts.threads.unwrap_or_else(rayon::current_num_threads);
    let manifest = RunManifest {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: config.experiment.name().to_string(),
        seed: config.seed,
        config: config.clone(),
        artifacts: artifacts
            .iter()
            .map(|a| ArtifactRecord {
                file: a.name.clone(),
                sha256: a.sha256(),
                bytes: a.content.len(),
            })
            .collect(),
        duration_seconds: start.elapsed().as_secs_f64(),
        threads,
        fresh_paths: opts.fresh_paths,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Computation(e.to_string()))? + "\n";
    let mut files: Vec<(String, Vec<u8>)> = artifacts.into_iter().map(|a| (a.name, a.content)).collect();
    files.push((MANIFEST_FILE.to_string(), json.into_bytes()));
    output::write_all(&config.output_dir, &files)
        .map_err(|e| CliError::Io(format!("{}: {e}", config.output_dir.display())))?;
    Ok(manifest)
}
