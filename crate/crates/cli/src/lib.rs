//! Experiment runner: config loading, flag overrides, subcommand dispatch,
//! artifact writing and manifests.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use thiserror::Error;

use commands::{apply_args, execute, Command, ReplayArgs};
use config::{ConfigError, ExperimentConfig};
use manifest::{sha256_hex, Manifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl RunError {
    pub fn io(e: impl std::fmt::Display) -> Self {
        RunError::Io(e.to_string())
    }

    pub fn numeric(e: impl std::fmt::Display) -> Self {
        RunError::Numeric(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Usage(_) => EXIT_VALIDATION,
            RunError::Numeric(_) => EXIT_NUMERIC,
            RunError::Io(_) | RunError::Mismatch(_) => EXIT_FAILURE,
        }
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct Overrides {
    /// TOML experiment config; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub c: Option<f64>,
    #[arg(long = "c-prime", global = true)]
    pub c_prime: Option<f64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long = "n-max", global = true)]
    pub n_max: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "rovella", version, about = "Random contracting Lorenz map experiments")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

impl Overrides {
    /// Applies the numeric overrides. `--samples` and `--n-max` go to the
    /// section the subcommand reads.
    pub fn apply(&self, cmd: &Command, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.seed {
            cfg.noise.seed = v;
        }
        if let Some(v) = self.eps {
            cfg.noise.eps = v;
        }
        if let Some(v) = self.delta {
            cfg.hyperbolic.delta = v;
        }
        if let Some(v) = self.c {
            cfg.hyperbolic.c = v;
        }
        if let Some(v) = self.c_prime {
            cfg.hyperbolic.c_prime = v;
        }
        if let Some(v) = self.out.as_ref() {
            cfg.output.directory = v.clone();
        }
        let measures = matches!(cmd, Command::Density(_) | Command::Correlation(_));
        let tower = matches!(cmd, Command::BuildPartition | Command::CertifyTower);
        if let Some(v) = self.samples {
            if measures {
                cfg.measures.samples = v;
            } else if tower {
                cfg.tower.pairs = v;
            } else {
                cfg.ensemble.samples = v;
            }
        }
        if let Some(v) = self.n_max {
            if measures {
                cfg.measures.n_max = v;
            } else if tower {
                cfg.tower.n_max = v;
            } else {
                cfg.ensemble.n_max = v;
            }
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(RunError::io)
}

fn write_artifacts(dir: &Path, outcome: &commands::Outcome) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    for a in &outcome.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Runs a resolved command and writes artifacts plus `manifest.json`.
pub fn run_resolved(cmd: &Command, cfg: &ExperimentConfig, workers: usize) -> Result<Manifest, RunError> {
    let (family, constraints) = cfg.validate()?;
    let start = Instant::now();
    let outcome = pool(workers)?.install(|| execute(cmd, cfg, &family))?;
    let wall = start.elapsed().as_secs_f64();
    let dir = PathBuf::from(&cfg.output.directory);
    write_artifacts(&dir, &outcome)?;
    let inputs = match cmd {
        Command::Fit(a) => {
            let bytes = std::fs::read(&a.input).map_err(|e| RunError::Io(format!("{}: {e}", a.input)))?;
            vec![(a.input.clone(), sha256_hex(&bytes))]
        }
        _ => Vec::new(),
    };
    let manifest = Manifest::new(cmd, cfg, workers, wall, constraints, inputs, &outcome.artifacts);
    manifest.write(&dir.join("manifest.json"))?;
    if let Some(msg) = outcome.numeric_failure {
        return Err(RunError::Numeric(msg));
    }
    Ok(manifest)
}

/// Reruns the command recorded in a manifest. `--out` redirects the
/// artifacts, `--workers` overrides the recorded worker count.
pub fn replay(args: &ReplayArgs, overrides: &Overrides) -> Result<Manifest, RunError> {
    let recorded = Manifest::read(Path::new(&args.manifest))?;
    let mut cfg = ExperimentConfig::from_toml(&recorded.config)?;
    if sha256_hex(recorded.config.as_bytes()) != recorded.config_sha256 {
        return Err(RunError::Mismatch("config text does not match its recorded hash".into()));
    }
    for (path, hash) in &recorded.inputs {
        let bytes = std::fs::read(path).map_err(|e| RunError::Io(format!("{path}: {e}")))?;
        if &sha256_hex(&bytes) != hash {
            return Err(RunError::Mismatch(format!("input {path} changed since the recorded run")));
        }
    }
    if let Some(out) = &overrides.out {
        cfg.output.directory = out.clone();
    }
    let workers = overrides.workers.unwrap_or(recorded.workers);
    let fresh = run_resolved(&recorded.command, &cfg, workers)?;
    if args.check {
        let diffs = recorded.artifact_diffs(&fresh);
        if !diffs.is_empty() {
            return Err(RunError::Mismatch(diffs.join("; ")));
        }
    }
    Ok(fresh)
}

pub fn run(cli: &Cli) -> Result<Manifest, RunError> {
    if let Command::Replay(args) = &cli.command {
        return replay(args, &cli.overrides);
    }
    let mut cfg = match &cli.overrides.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    apply_args(&cli.command, &mut cfg);
    cli.overrides.apply(&cli.command, &mut cfg);
    run_resolved(&cli.command, &cfg, cli.overrides.workers.unwrap_or(0))
}

/// Process entry: maps the result to an exit code and reports to stderr.
pub fn main_with(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(m) => {
            for a in &m.artifacts {
                println!("{}  {}", a.sha256, a.file);
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("rovella {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("rovella").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = parse(&["simulate-orbit", "--n", "10", "--seed", "9", "--workers", "2"]);
        assert_eq!(cli.overrides.seed, Some(9));
        assert_eq!(cli.overrides.workers, Some(2));
    }

    #[test]
    fn n_max_goes_to_the_section_in_use() {
        let mut cfg = ExperimentConfig::default();
        let cli = parse(&["correlation", "--n-max", "12"]);
        cli.overrides.apply(&cli.command, &mut cfg);
        assert_eq!(cfg.measures.n_max, 12);
        assert_ne!(cfg.ensemble.n_max, 12);
        let cli = parse(&["build-partition", "--n-max", "12"]);
        cli.overrides.apply(&cli.command, &mut cfg);
        assert_eq!(cfg.tower.n_max, 12);
    }

    #[test]
    fn validation_failure_is_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let code = main_with(["rovella", "simulate-orbit", "--c", "0.6", "--c-prime", "0.5", "--out", out].map(Into::into));
        assert_eq!(code, EXIT_VALIDATION);
        let code = main_with(["rovella", "simulate-orbit", "--bogus"].map(Into::into));
        assert_eq!(code, EXIT_VALIDATION);
    }
}
