//! ito-tanaka: `T^{W^H} b_{s,t}` against `I1 + I2` on a common driver, at
//! the configured resolution and after one dyadic refinement.

use regnoise_core::averaging::{ito_tanaka, synthesize_drift, ItoScheme, ItoTanakaTerms};
use regnoise_core::gaussian::{sample_two_sided_bm, VolterraDriver};
use regnoise_core::gridcore::{SpaceGrid, TimeGrid};
use serde::{Deserialize, Serialize};

use super::{replica_seeds, try_par_map, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, FlatArray, Table};
use crate::svg::{Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("hurst", "Hurst index of the driver, in (0,1)"),
    ("horizon", "final time t of the increment"),
    ("s_fraction", "start time s as a fraction of the horizon"),
    ("alpha", "regularity of the synthesized drift (>= 3 for a smooth drift)"),
    ("k_modes", "modes of the synthesized drift before windowing (>= 16)"),
    ("half_width", "half-width of the periodic box"),
    ("support_radius", "support radius of the drift"),
    ("max_deviation", "acceptance bound on the relative L2 deviation"),
    ("refine", "also run one dyadic time refinement on the same driver"),
    ("literal_scheme", "also report the literal continuum-variance scheme"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ItoTanakaParams {
    pub hurst: f64,
    pub horizon: f64,
    pub s_fraction: f64,
    pub alpha: f64,
    pub k_modes: usize,
    pub half_width: f64,
    pub support_radius: f64,
    pub max_deviation: f64,
    pub refine: bool,
    pub literal_scheme: bool,
}

impl Default for ItoTanakaParams {
    fn default() -> Self {
        Self {
            hurst: 0.3,
            horizon: 1.0,
            s_fraction: 0.25,
            alpha: 3.5,
            k_modes: 16,
            half_width: 8.0,
            support_radius: 2.0,
            max_deviation: 0.05,
            refine: true,
            literal_scheme: true,
        }
    }
}

impl ItoTanakaParams {
    pub fn validate(&self, cfg: &ExperimentConfig, d: &mut Diagnostics) {
        d.hurst("params.hurst", self.hurst);
        d.positive("params.horizon", self.horizon);
        if !(self.s_fraction >= 0.0 && self.s_fraction < 1.0) {
            d.push("params.s_fraction", "must lie in [0, 1)");
        }
        if self.alpha < 3.0 {
            d.push("params.alpha", "the decomposition is checked for smooth drifts only (alpha >= 3)");
        }
        if self.k_modes < 16 {
            d.push("params.k_modes", "at least 16 modes");
        }
        d.positive("params.half_width", self.half_width);
        d.positive("params.support_radius", self.support_radius);
        if self.support_radius >= self.half_width {
            d.push("params.support_radius", "support must lie inside the box");
        } else if self.support_radius > 0.0 {
            // The windowed drift keeps k_modes + 16 L/R modes.
            let kept = self.k_modes + (16.0 * self.half_width / self.support_radius).ceil() as usize;
            if cfg.resolution.m_space < 2 * (kept + 1) {
                d.push(
                    "resolution.m_space",
                    format!("must be at least {} to hold the drift's {kept} modes", 2 * (kept + 1)),
                );
            }
        }
        if cfg.resolution.n_time > 1 << 14 {
            d.push("resolution.n_time", "the quadratic-cost decomposition is limited to 2^14 steps");
        }
    }
}

struct Replica {
    seed: u64,
    rows: Vec<(usize, &'static str, f64)>,
    coarse: ItoTanakaTerms,
    refined: Option<f64>,
}

fn driver(p: &ItoTanakaParams, seed: u64, n: usize) -> regnoise_core::Result<VolterraDriver> {
    let tg = TimeGrid::new(-10.0 * p.horizon, p.horizon, 11 * n)?;
    VolterraDriver::new(p.hurst, sample_two_sided_bm(seed, tg, 1)?)
}

pub fn run(cfg: &ExperimentConfig, p: &ItoTanakaParams) -> Result<Outcome> {
    let n = cfg.resolution.n_time;
    let grid = SpaceGrid::new(p.half_width, cfg.resolution.m_space, 1)?;
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    let start = (p.s_fraction * n as f64) as usize;
    let replicas = try_par_map(&seeds, |&seed| {
        let b = synthesize_drift(p.alpha, p.k_modes, p.support_radius, p.half_width, seed)?;
        let vd = driver(p, seed, n)?;
        let coarse = ito_tanaka(&b, &vd, start, n, &grid, ItoScheme::default())?;
        let mut rows = vec![(n, "discrete-milstein", coarse.relative_deviation)];
        if p.literal_scheme {
            rows.push((n, "continuum", ito_tanaka(&b, &vd, start, n, &grid, ItoScheme::Continuum)?.relative_deviation));
        }
        let refined = if p.refine {
            let fine = driver(p, seed, 2 * n)?;
            let dev = ito_tanaka(&b, &fine, 2 * start, 2 * n, &grid, ItoScheme::default())?.relative_deviation;
            rows.push((2 * n, "discrete-milstein", dev));
            Some(dev)
        } else {
            None
        };
        Ok(Replica { seed, rows, coarse, refined })
    })?;

    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };
    let mut table = Table::new("ito_tanaka", &["seed", "n_time", "scheme", "relative_deviation"]);
    for r in &replicas {
        for (steps, scheme, dev) in &r.rows {
            table.push(vec![r.seed.to_string(), steps.to_string(), scheme.to_string(), num(*dev)]);
        }
    }
    out.tables.push(table);

    let worst = replicas.iter().map(|r| r.coarse.relative_deviation).fold(0.0, f64::max);
    out.checks.push(Check::lt(format!("relative deviation at n={n}"), worst, p.max_deviation));
    if p.refine {
        // Largest ratio fine/coarse over replicas; < 1 means every replica improved.
        let ratio =
            replicas.iter().map(|r| r.refined.unwrap_or(f64::NAN) / r.coarse.relative_deviation).fold(0.0, f64::max);
        out.checks.push(Check::lt("deviation ratio after one refinement", ratio, 1.0));
    }

    if let Some(first) = replicas.first() {
        let t = &first.coarse;
        let xs: Vec<f64> = (0..grid.size()).map(|i| grid.point(i)[0]).collect();
        let lhs: Vec<(f64, f64)> = xs.iter().zip(&t.lhs.values).map(|(x, v)| (*x, *v)).collect();
        let rhs: Vec<(f64, f64)> = xs.iter().enumerate().map(|(i, x)| (*x, t.i1.values[i] + t.i2.values[i])).collect();
        let chart = Chart::new("averaged drift increment and its decomposition", "x", "value")
            .with(Series::line("T^W b (s,t)", lhs))
            .with(Series::line("I1 + I2", rhs));
        out.plot("ito_tanaka_section", chart.render());
        let mut data = t.lhs.values.clone();
        data.extend_from_slice(&t.i1.values);
        data.extend_from_slice(&t.i2.values);
        let params = vec![p.horizon * p.s_fraction, p.horizon, -p.half_width, p.half_width];
        out.arrays.push(("ito_tanaka_terms".into(), FlatArray::new(vec![3, grid.size() as u64], params, data)?));
    }
    Ok(out)
}
