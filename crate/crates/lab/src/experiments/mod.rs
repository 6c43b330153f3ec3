//! The experiment registry. Each experiment composes core operations,
//! returns its tables, plots and arrays, and a list of threshold checks.
//!
//! Replicas run in parallel through rayon; results are collected in replica
//! order and reduced sequentially, so outputs do not depend on the thread
//! count.

use rayon::prelude::*;
use regnoise_core::rng::CounterRng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Params};
use crate::error::Result;
use crate::io::{FlatArray, Table};

pub mod continuity;
pub mod fbm;
mod fields;
pub mod flow;
pub mod fracalc;
pub mod gain;
pub mod ito;
pub mod peano;
pub mod transport;
pub mod yde;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Self::Lt => "<",
            Self::Le => "<=",
            Self::Gt => ">",
            Self::Ge => ">=",
        }
    }
}

/// A measured quantity against its acceptance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, threshold: f64) -> Self {
        let passed = match relation {
            Relation::Lt => value < threshold,
            Relation::Le => value <= threshold,
            Relation::Gt => value > threshold,
            Relation::Ge => value >= threshold,
        };
        Self { name: name.into(), value, relation, threshold, passed }
    }

    pub fn lt(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value, Relation::Lt, threshold)
    }

    pub fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value, Relation::Le, threshold)
    }

    pub fn gt(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value, Relation::Gt, threshold)
    }

    pub fn ge(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value, Relation::Ge, threshold)
    }

    /// A yes/no property, recorded as 1/0 against `>= 1`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Relation::Ge, 1.0)
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "ok  " } else { "MISS" };
        write!(f, "{tag} {}: {} {} {}", self.name, self.value, self.relation.symbol(), self.threshold)
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// `(file stem, svg text)`.
    pub plots: Vec<(String, String)>,
    /// `(file stem, array)`.
    pub arrays: Vec<(String, FlatArray)>,
    pub checks: Vec<Check>,
    pub replica_seeds: Vec<u64>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn plot(&mut self, name: &str, svg: String) {
        self.plots.push((name.into(), svg));
    }
}

/// Seeds of the replicas of a run.
pub fn replica_seeds(master: u64, count: usize) -> Vec<u64> {
    let rng = CounterRng::new(master);
    (0..count as u64).map(|i| rng.derive(i)).collect()
}

/// Ordered parallel map.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

/// Ordered parallel map over fallible work; the first error in replica order wins.
pub(crate) fn try_par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> regnoise_core::Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    par_map(items, f).into_iter().map(|r| r.map_err(Into::into)).collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    match &cfg.params {
        Params::FbmCheck(p) => fbm::run(cfg, p),
        Params::Gain(p) => gain::run(cfg, p),
        Params::ItoTanaka(p) => ito::run(cfg, p),
        Params::Yde(p) => yde::run(cfg, p),
        Params::Flow(p) => flow::run(cfg, p),
        Params::Peano(p) => peano::run(cfg, p),
        Params::Transport(p) => transport::run(cfg, p),
        Params::Continuity(p) => continuity::run(cfg, p),
        Params::FracalcCheck(p) => fracalc::run(cfg, p),
    }
}
