//! fracalc-check: fractional integral/derivative round trip, covariance of
//! `K_H`-generated paths, and the Girsanov density's expectation.

use regnoise_core::fracalc::{frac_derivative, frac_integral, girsanov_report, Increments, KhOperator, TimeSeries};
use regnoise_core::gaussian::fbm_covariance;
use regnoise_core::gridcore::TimeGrid;
use regnoise_core::rng::CounterRng;
use regnoise_core::stats::mean_with_se;
use serde::{Deserialize, Serialize};

use super::{replica_seeds, try_par_map, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, Table};
use crate::svg::{Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("alphas", "orders of the D^a I^a round trip, each in (0,1)"),
    ("round_trip_tolerance", "bound on the interior relative round-trip error"),
    ("kh_hurst", "Hurst indices of the K_H covariance check"),
    ("kh_steps", "time steps of the K_H paths (power of two; cost is quadratic)"),
    ("kh_pairs", "random (s,t) node pairs per Hurst index"),
    ("girsanov_hurst", "Hurst index of the Girsanov check"),
    ("shift_amplitude", "h(t) = shift_amplitude * t^shift_exponent"),
    ("shift_exponent", "exponent of the shift, > girsanov_hurst + 1/2"),
    ("max_z", "acceptance bound in standard errors"),
];

const PAIR_STREAM: u64 = 0x4C41_4250_0002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FracalcParams {
    pub alphas: Vec<f64>,
    pub round_trip_tolerance: f64,
    pub kh_hurst: Vec<f64>,
    pub kh_steps: usize,
    pub kh_pairs: usize,
    pub girsanov_hurst: f64,
    pub shift_amplitude: f64,
    pub shift_exponent: f64,
    pub max_z: f64,
}

impl Default for FracalcParams {
    fn default() -> Self {
        Self {
            alphas: vec![0.2, 0.45],
            round_trip_tolerance: 1e-2,
            kh_hurst: vec![0.7, 0.3],
            kh_steps: 256,
            kh_pairs: 5,
            girsanov_hurst: 0.5,
            shift_amplitude: 0.5,
            shift_exponent: 1.2,
            max_z: 3.0,
        }
    }
}

impl FracalcParams {
    pub fn validate(&self, cfg: &ExperimentConfig, d: &mut Diagnostics) {
        for (i, a) in self.alphas.iter().enumerate() {
            d.range(&format!("params.alphas[{i}]"), *a, f64::MIN_POSITIVE, 0.999);
        }
        for (i, h) in self.kh_hurst.iter().enumerate() {
            d.hurst(&format!("params.kh_hurst[{i}]"), *h);
        }
        d.hurst("params.girsanov_hurst", self.girsanov_hurst);
        if self.kh_steps < 8 || !self.kh_steps.is_power_of_two() || self.kh_steps > 4096 {
            d.push("params.kh_steps", "must be a power of two in [8, 4096]");
        }
        if !(self.shift_exponent > self.girsanov_hurst + 0.5 && self.shift_exponent <= 2.0) {
            d.push("params.shift_exponent", "must lie in (girsanov_hurst + 1/2, 2]");
        }
        d.range("params.shift_amplitude", self.shift_amplitude, -2.0, 2.0);
        d.positive("params.round_trip_tolerance", self.round_trip_tolerance);
        d.positive("params.max_z", self.max_z);
        if cfg.resolution.n_time < 64 {
            d.push("resolution.n_time", "the round trip needs at least 64 steps");
        }
    }
}

/// Max interior error relative to the max interior value, 5% trimmed at each end.
fn interior_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (lo, hi) = (n / 20, n - n / 20);
    let num = (lo..hi).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
    let den = (lo..hi).map(|i| b[i].abs()).fold(0.0, f64::max);
    num / den
}

pub fn run(cfg: &ExperimentConfig, p: &FracalcParams) -> Result<Outcome> {
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };

    // Round trip D^α I^α f = f.
    let n = cfg.resolution.n_time;
    let grid = TimeGrid::unit(1.0, n)?;
    let f = TimeSeries::from_fn(grid, |t| (2.0 * t).sin() + t * t);
    let mut rt = Table::new("round_trip", &["alpha", "interior_relative_error"]);
    let mut chart = Chart::new("fractional round trip", "t", "value").with(Series::line("f", sample(&grid, &f.values)));
    for &alpha in &p.alphas {
        let back = frac_derivative(&frac_integral(&f, alpha)?, alpha)?;
        let err = interior_relative_error(&back.values, &f.values);
        rt.push(vec![num(alpha), num(err)]);
        out.checks.push(Check::lt(format!("round trip error at alpha={alpha}"), err, p.round_trip_tolerance));
        chart = chart.with(Series::line(format!("D^a I^a f, a = {alpha}"), sample(&grid, &back.values)));
    }
    out.tables.push(rt);
    out.plot("round_trip", chart.render());

    // Covariance of K_H(dB) against the fBm formula, allowing the exact
    // covariance of the discrete operator as the quadrature bias.
    let kn = p.kh_steps;
    let kgrid = TimeGrid::unit(1.0, kn)?;
    let rng = CounterRng::new(cfg.seed);
    let mut cov =
        Table::new("kh_covariance", &["hurst", "s", "t", "empirical", "formula", "discrete", "std_error", "z_excess"]);
    for (hi, &h) in p.kh_hurst.iter().enumerate() {
        let op = KhOperator::new(kgrid, h)?;
        let pairs: Vec<(usize, usize)> = (0..p.kh_pairs as u64)
            .map(|i| {
                let base = 1_000 * hi as u64 + 2 * i;
                let a = 1 + ((rng.uniform(PAIR_STREAM, base) * kn as f64) as usize).min(kn - 1);
                let b = 1 + ((rng.uniform(PAIR_STREAM, base + 1) * kn as f64) as usize).min(kn - 1);
                (a.min(b), a.max(b))
            })
            .collect();
        // Columns of the discrete operator give its exact covariance.
        let cols: Vec<usize> = (0..kn).collect();
        let columns = try_par_map(&cols, |&j| {
            let mut e = vec![0.0; kn];
            e[j] = 1.0;
            op.apply(&Increments::new(kgrid, e)?)
        })?;
        let samples = try_par_map(&seeds, |&seed| {
            let w = op.apply(&Increments::brownian(kgrid, seed))?;
            Ok(pairs.iter().map(|&(a, b)| w.values[a] * w.values[b]).collect::<Vec<f64>>())
        })?;
        let mut worst = f64::NEG_INFINITY;
        for (j, &(a, b)) in pairs.iter().enumerate() {
            let xs: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            let (mean, se) = mean_with_se(&xs);
            let (s, t) = (kgrid.node(a), kgrid.node(b));
            let formula = fbm_covariance(h, s, t);
            let discrete: f64 = columns.iter().map(|c| c.values[a] * c.values[b]).sum::<f64>() * kgrid.step();
            // |emp − formula| measured in SE after removing the allowed bias.
            let excess = ((mean - formula).abs() - (discrete - formula).abs()) / se;
            worst = worst.max(excess);
            cov.push(vec![num(h), num(s), num(t), num(mean), num(formula), num(discrete), num(se), num(excess)]);
        }
        if !pairs.is_empty() {
            out.checks.push(Check::le(format!("K_H covariance excess over bias in SE at H={h}"), worst, p.max_z));
        }
    }
    out.tables.push(cov);

    // Girsanov: E[exp(log density)] = 1 for the deterministic shift.
    let shift = TimeSeries::from_fn(grid, |t| p.shift_amplitude * t.powf(p.shift_exponent));
    let densities = try_par_map(&seeds, |&seed| {
        let r = girsanov_report(&shift, &Increments::brownian(grid, seed), p.girsanov_hurst)?;
        Ok(r.log_density.exp())
    })?;
    let (mean, se) = mean_with_se(&densities);
    let z = (mean - 1.0).abs() / se;
    out.checks.push(Check::le("Girsanov density mean |z| from 1", z, p.max_z));
    let mut g = Table::new("girsanov", &["hurst", "replicas", "mean_density", "std_error", "z"]);
    g.push(vec![num(p.girsanov_hurst), seeds.len().to_string(), num(mean), num(se), num(z)]);
    out.tables.push(g);
    Ok(out)
}

fn sample(grid: &TimeGrid, values: &[f64]) -> Vec<(f64, f64)> {
    let stride = (values.len() / 256).max(1);
    values.iter().enumerate().step_by(stride).map(|(k, v)| (grid.node(k), *v)).collect()
}
