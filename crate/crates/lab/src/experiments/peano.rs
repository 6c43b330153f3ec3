//! peano: the non-Lipschitz drift `sign(x)|x|^κ` started at `±ε` — two
//! branches without noise, a single one along fBm paths.

use regnoise_core::yde::{peano_drift, peano_experiment, PEANO_COINCIDENCE, PEANO_START};
use serde::{Deserialize, Serialize};

use super::{replica_seeds, try_par_map, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, Table};
use crate::svg::{Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("kappa", "exponent of the drift sign(x)|x|^kappa, in (0, 1]"),
    ("hurst", "Hurst index of the noise, in (0,1)"),
    ("min_separation", "required branch separation without noise"),
    ("min_rate", "required fraction of noisy runs whose branches coincide"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeanoParams {
    pub kappa: f64,
    pub hurst: f64,
    pub min_separation: f64,
    pub min_rate: f64,
}

impl Default for PeanoParams {
    fn default() -> Self {
        Self { kappa: 0.5, hurst: 0.2, min_separation: 0.1, min_rate: 0.9 }
    }
}

impl PeanoParams {
    pub fn validate(&self, _cfg: &ExperimentConfig, d: &mut Diagnostics) {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            d.push("params.kappa", "must lie in (0, 1]");
        }
        d.hurst("params.hurst", self.hurst);
        d.range("params.min_rate", self.min_rate, 0.0, 1.0);
        d.positive("params.min_separation", self.min_separation);
    }
}

pub fn run(cfg: &ExperimentConfig, p: &PeanoParams) -> Result<Outcome> {
    let n = cfg.resolution.n_time;
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    // One replica per job; the noiseless control is recomputed per job and
    // is identical across them.
    let reports = try_par_map(&seeds, |&s| peano_experiment(p.kappa, p.hurst, &[s], n))?;
    let control = reports[0].control_separation;
    let samples: Vec<_> = reports.iter().flat_map(|r| r.samples.iter().copied()).collect();
    let hits = samples.iter().filter(|s| s.coincide).count();
    let rate = hits as f64 / samples.len() as f64;

    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };
    out.checks.push(Check::gt("branch separation without noise", control, p.min_separation));
    out.checks.push(Check::ge("branch coincidence rate with noise", rate, p.min_rate));

    let mut table = Table::new("peano", &["seed", "separation", "coincide"]);
    table.push(vec!["control".into(), num(control), (control < PEANO_COINCIDENCE).to_string()]);
    for s in &samples {
        table.push(vec![s.seed.to_string(), num(s.separation), s.coincide.to_string()]);
    }
    out.tables.push(table);

    // Noiseless branches for the picture: forward Euler from ±ε.
    let dt = 1.0 / n as f64;
    let stride = (n / 256).max(1);
    let branch = |x0: f64| {
        let mut x = x0;
        let mut pts = vec![(0.0, x)];
        for k in 0..n {
            x += peano_drift(p.kappa, x) * dt;
            if (k + 1) % stride == 0 {
                pts.push(((k + 1) as f64 * dt, x));
            }
        }
        pts
    };
    let chart = Chart::new("branches of the noiseless equation", "t", "x")
        .with(Series::line("start +eps", branch(PEANO_START)))
        .with(Series::line("start -eps", branch(-PEANO_START)));
    out.plot("peano_branches", chart.render());
    let hist: Vec<(f64, f64)> = samples.iter().enumerate().map(|(i, s)| (i as f64, s.separation.max(1e-16))).collect();
    let mut sep = Chart::new("branch separation along noisy paths", "replica", "sup |x+ - x-|")
        .with(Series::markers("replicas", hist));
    sep.log_y = true;
    out.plot("peano_separation", sep.render());
    Ok(out)
}
