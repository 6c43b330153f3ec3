//! Runs an experiment inside a sized thread pool and writes its outputs
//! next to a manifest with SHA-256 hashes and the resolved config.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::experiments::{run_experiment, Check, Outcome};
use crate::io::{num, sha256_hex, write_file, Table};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads (`None`: rayon's default).
    pub threads: Option<usize>,
    /// Overrides the config's `output_dir`.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub master_seed: u64,
    pub replica_seeds: Vec<u64>,
    pub threads: usize,
    pub wall_time_s: f64,
    /// The resolved config; `run --config manifest.json` reruns it.
    pub config: Value,
    pub outputs: Vec<OutputFile>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Where a run writes: explicit option, then config, then `runs/<name>-<seed>`.
pub fn output_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{}", cfg.experiment.name(), cfg.seed)))
}

/// Runs the experiment and writes all outputs plus `manifest.json`.
pub fn execute(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Manifest, Outcome, PathBuf)> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build()?;
    let threads = pool.current_num_threads();
    let start = Instant::now();
    let outcome = pool.install(|| run_experiment(cfg))?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let dir = output_dir(cfg, opts);
    std::fs::create_dir_all(&dir).map_err(|source| LabError::Write { path: dir.clone(), source })?;
    let mut outputs = Vec::new();
    let mut emit = |name: String, bytes: &[u8]| -> Result<()> {
        write_file(&dir.join(&name), bytes)?;
        outputs.push(OutputFile { file: name, sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    };
    for t in &outcome.tables {
        emit(format!("{}.csv", t.name), &t.to_csv()?)?;
    }
    emit("checks.csv".into(), &checks_table(&outcome.checks).to_csv()?)?;
    for (name, svg) in &outcome.plots {
        emit(format!("{name}.svg"), svg.as_bytes())?;
    }
    for (name, arr) in &outcome.arrays {
        emit(format!("{name}.bin"), &arr.to_bytes())?;
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment.name().into(),
        master_seed: cfg.seed,
        replica_seeds: outcome.replica_seeds.clone(),
        threads,
        wall_time_s,
        config: cfg.to_value(),
        outputs,
        checks: outcome.checks.clone(),
        passed: outcome.passed(),
    };
    let text = serde_json::to_vec_pretty(&manifest)?;
    write_file(&dir.join("manifest.json"), &text)?;
    Ok((manifest, outcome, dir))
}

fn checks_table(checks: &[Check]) -> Table {
    let mut t = Table::new("checks", &["check", "value", "relation", "threshold", "passed"]);
    for c in checks {
        let rel = serde_json::to_value(c.relation).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        t.push(vec![c.name.clone(), num(c.value), rel, num(c.threshold), c.passed.to_string()]);
    }
    t
}

/// Reads a manifest written by [`execute`].
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|source| LabError::Read { path: path.to_owned(), source })?;
    Ok(serde_json::from_str(&text)?)
}
