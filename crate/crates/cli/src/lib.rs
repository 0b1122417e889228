//! Batch front-end for the `fujita` binary: configuration, subcommands and
//! run manifests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::commands::{Artifacts, CommandError};
use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "fujita", version, about = "Numerical lab for u_t - w^-1 div(w grad u) = u^p with power weights")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (flat `key = value`); defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Kernel structure, Gaussian oracle, envelope fit and decay slopes.
    KernelVerify,
    /// Lorentz-norm identities and inequalities on random step functions.
    LorentzSelftest,
    /// One trajectory, written as CSV.
    Evolve,
    /// Blow-up/global classification of one (p, alpha) cell.
    Classify,
    /// Dichotomy sweep over p and alpha, written as CSV and SVG.
    Sweep,
    /// Decay-exponent regressions of the linear flow.
    DecayFit,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::KernelVerify => "kernel-verify",
            Command::LorentzSelftest => "lorentz-selftest",
            Command::Evolve => "evolve",
            Command::Classify => "classify",
            Command::Sweep => "sweep",
            Command::DecayFit => "decay-fit",
        }
    }
}

/// Exit status: 0 success, 1 numerical or I/O failure, 2 invalid configuration.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return 2;
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return 2;
    }
    match execute(cli, &cfg) {
        Ok(art) => {
            for line in &art.summary {
                println!("{line}");
            }
            for f in &art.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn execute(cli: &Cli, cfg: &ExperimentConfig) -> Result<Artifacts, CommandError> {
    std::fs::create_dir_all(&cli.out).map_err(|source| CommandError::Io { path: cli.out.display().to_string(), source })?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build().map_err(|e| CommandError::Pool(e.to_string()))?;
    let out = cli.out.as_path();
    let result = pool.install(|| match cli.command {
        Command::KernelVerify => commands::kernel_verify(cfg, out),
        Command::LorentzSelftest => commands::lorentz_selftest(cfg, cli.seed, out),
        Command::Evolve => commands::evolve_command(cfg, out),
        Command::Classify => commands::classify_command(cfg, out),
        Command::Sweep => commands::sweep_command(cfg, out),
        Command::DecayFit => commands::decay_fit(cfg, out),
    });
    let mut art = result?;
    let manifest = manifest(cli, cfg, &art);
    let path = out.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(|source| CommandError::Io { path: path.display().to_string(), source })?;
    art.files.push(path);
    Ok(art)
}

/// The resolved configuration in config syntax, preceded by the command and
/// seed and followed by the fitted constants, all as comments where needed
/// so the file reloads with `--config`.
pub fn manifest(cli: &Cli, cfg: &ExperimentConfig, art: &Artifacts) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# fujita {} {}", cli.command.name(), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# seed = {}", cli.seed);
    let _ = writeln!(s, "# jobs = {}", cli.jobs);
    s.push_str(&cfg.to_text());
    s.push_str("# fitted constants\n");
    for line in &art.fitted {
        let _ = writeln!(s, "# {line}");
    }
    for f in &art.files {
        if let Some(name) = f.file_name() {
            let _ = writeln!(s, "# output {}", name.to_string_lossy());
        }
    }
    s
}
