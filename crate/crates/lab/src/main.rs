use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use regnoise_lab::config::{ExperimentConfig, ExperimentKind, SEED_ENV};
use regnoise_lab::{execute, RunOptions};

#[derive(Parser)]
#[command(name = "regnoise-lab", version, about = "Numerical experiments on regularisation by noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config (or a previous run's manifest.json).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List experiments and their parameters.
    List,
}

/// Exit code for runs that complete but miss an acceptance threshold.
const THRESHOLD_MISS: u8 = 2;

fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    cfg.apply_env_seed()?;
    Ok(cfg)
}

fn report_invalid(cfg: &ExperimentConfig) -> bool {
    let diags = cfg.validate();
    for d in &diags {
        eprintln!("error: {d}");
    }
    !diags.is_empty()
}

fn list() {
    for kind in ExperimentKind::ALL {
        let (seeds, res) = kind.defaults();
        println!("{:<14} {}", kind.name(), kind.description());
        println!("{:<14} defaults: seeds = {seeds}, n_time = {}, m_space = {}", "", res.n_time, res.m_space);
        for (name, doc) in kind.param_docs() {
            println!("{:<16}{name}: {doc}", "");
        }
        println!();
    }
    println!("{SEED_ENV} overrides the master seed of any config.");
}

fn real_main() -> anyhow::Result<u8> {
    match Cli::parse().command {
        Command::List => {
            list();
            Ok(0)
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            if report_invalid(&cfg) {
                return Ok(1);
            }
            println!("{}: valid {} config", config.display(), cfg.experiment.name());
            Ok(0)
        }
        Command::Run { config, threads, out } => {
            let cfg = load(&config)?;
            if report_invalid(&cfg) {
                return Ok(1);
            }
            if threads == Some(0) {
                anyhow::bail!("--threads must be positive");
            }
            let (manifest, outcome, dir) = execute(&cfg, &RunOptions { threads, out_dir: out })?;
            for c in &outcome.checks {
                println!("{c}");
            }
            println!(
                "{} seed {} on {} threads in {:.1} s -> {}",
                manifest.experiment,
                manifest.master_seed,
                manifest.threads,
                manifest.wall_time_s,
                dir.display()
            );
            Ok(if manifest.passed { 0 } else { THRESHOLD_MISS })
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            // Our error messages already embed their causes; print each once.
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
