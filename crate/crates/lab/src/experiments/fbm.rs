//! fbm-check: Monte Carlo covariance of the exact fBm sampler and the
//! conditional variance of the independent part `W^{1,H}_{s,t}`.

use regnoise_core::gaussian::{
    fbm_covariance, sample_fbm_exact, sample_two_sided_bm, volterra_cell_weights, HurstParams,
};
use regnoise_core::gridcore::TimeGrid;
use regnoise_core::rng::CounterRng;
use regnoise_core::stats::mean_with_se;
use serde::{Deserialize, Serialize};

use super::{replica_seeds, try_par_map, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, Table};
use crate::svg::{heatmap, Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("hurst", "Hurst indices of the covariance check, each in (0,1)"),
    ("pairs", "random (s,t) node pairs per Hurst index"),
    ("horizon", "time horizon T of the grid [0,T]"),
    ("lnd_hurst", "Hurst indices of the conditional-variance check"),
    ("lnd_pairs", "random (s,t) pairs per conditional-variance index"),
    ("lnd_min_lag", "minimal t - s as a fraction of T (keeps the cell quadrature bias small)"),
    ("heatmap_nodes", "nodes per axis of the empirical covariance heatmap"),
    ("max_z", "acceptance bound on |empirical - formula| / standard error"),
];

/// Random stream for the choice of time pairs.
const PAIR_STREAM: u64 = 0x4C41_4250_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbmCheckParams {
    pub hurst: Vec<f64>,
    pub pairs: usize,
    pub horizon: f64,
    pub lnd_hurst: Vec<f64>,
    pub lnd_pairs: usize,
    pub lnd_min_lag: f64,
    pub heatmap_nodes: usize,
    pub max_z: f64,
}

impl Default for FbmCheckParams {
    fn default() -> Self {
        Self {
            hurst: vec![0.2, 0.5, 0.8],
            pairs: 10,
            horizon: 1.0,
            lnd_hurst: vec![0.3, 0.7],
            lnd_pairs: 5,
            lnd_min_lag: 0.125,
            heatmap_nodes: 16,
            max_z: 3.0,
        }
    }
}

impl FbmCheckParams {
    pub fn validate(&self, cfg: &ExperimentConfig, d: &mut Diagnostics) {
        for (i, h) in self.hurst.iter().enumerate() {
            d.hurst(&format!("params.hurst[{i}]"), *h);
        }
        for (i, h) in self.lnd_hurst.iter().enumerate() {
            d.hurst(&format!("params.lnd_hurst[{i}]"), *h);
        }
        d.positive("params.horizon", self.horizon);
        d.positive("params.max_z", self.max_z);
        if self.pairs == 0 && self.lnd_pairs == 0 {
            d.push("params.pairs", "nothing to check: pairs and lnd_pairs are both zero");
        }
        if !(self.lnd_min_lag > 0.0 && self.lnd_min_lag < 1.0) {
            d.push("params.lnd_min_lag", "must lie in (0,1)");
        }
        if cfg.resolution.n_time > 1 << 16 {
            d.push("resolution.n_time", "the exact sampler is limited to 2^16 intervals here");
        }
        if self.heatmap_nodes < 2 || self.heatmap_nodes > cfg.resolution.n_time {
            d.push("params.heatmap_nodes", "must lie in [2, n_time]");
        }
    }
}

fn node_in(rng: &CounterRng, index: u64, lo: usize, hi: usize) -> usize {
    lo + ((rng.uniform(PAIR_STREAM, index) * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

/// Ordered pairs `0 < a < b ≤ n` with `b − a ≥ min_lag`.
fn draw_pairs(rng: &CounterRng, offset: u64, count: usize, n: usize, min_lag: usize) -> Vec<(usize, usize)> {
    (0..count as u64)
        .map(|i| {
            let a = node_in(rng, offset + 2 * i, 1, n - min_lag);
            let b = node_in(rng, offset + 2 * i + 1, a + min_lag, n);
            (a, b)
        })
        .collect()
}

pub fn run(cfg: &ExperimentConfig, p: &FbmCheckParams) -> Result<Outcome> {
    let n = cfg.resolution.n_time;
    let tgrid = TimeGrid::unit(p.horizon, n)?;
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    let rng = CounterRng::new(cfg.seed);
    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };

    let mut cov = Table::new("fbm_covariance", &["hurst", "s", "t", "empirical", "formula", "std_error", "z"]);
    let mut scatter = Chart::new("fBm covariance: empirical vs closed form", "closed form", "empirical");
    let hn = p.heatmap_nodes;
    let heat_nodes: Vec<usize> = (1..=hn).map(|k| k * n / hn).collect();
    for (hi, &h) in p.hurst.iter().enumerate() {
        let pairs = draw_pairs(&rng, 1_000 * hi as u64, p.pairs, n, 1);
        let samples = try_par_map(&seeds, |&seed| {
            let w = sample_fbm_exact(h, tgrid, seed, 1)?;
            let prods: Vec<f64> = pairs.iter().map(|&(a, b)| w.values[a] * w.values[b]).collect();
            let heat: Vec<f64> = heat_nodes.iter().map(|&k| w.values[k]).collect();
            Ok((prods, heat))
        })?;
        let mut worst: f64 = 0.0;
        let mut pts = Vec::new();
        for (j, &(a, b)) in pairs.iter().enumerate() {
            let xs: Vec<f64> = samples.iter().map(|s| s.0[j]).collect();
            let (mean, se) = mean_with_se(&xs);
            let (s, t) = (tgrid.node(a), tgrid.node(b));
            let formula = fbm_covariance(h, s, t);
            let z = (mean - formula) / se;
            worst = worst.max(z.abs());
            pts.push((formula, mean));
            cov.push(vec![num(h), num(s), num(t), num(mean), num(formula), num(se), num(z)]);
        }
        if !pairs.is_empty() {
            out.checks.push(Check::le(format!("covariance max |z| at H={h}"), worst, p.max_z));
        }
        scatter = scatter.with(Series::markers(format!("H = {h}"), pts));
        let mut matrix = vec![0.0; hn * hn];
        for s in &samples {
            for i in 0..hn {
                for j in 0..hn {
                    matrix[i * hn + j] += s.1[i] * s.1[j];
                }
            }
        }
        matrix.iter_mut().for_each(|v| *v /= samples.len() as f64);
        out.plot(
            &format!("covariance_heatmap_h{h}"),
            heatmap(&format!("empirical Cov(W_s, W_t), H = {h}"), &matrix, hn, hn),
        );
    }
    out.tables.push(cov);
    out.plot("covariance_scatter", scatter.render());

    // Conditional variance of the independent part
    // w1 = c_H ∫_s^t (t−r)^{H−1/2} dB_r, with the kernel integrated exactly
    // per cell. Only the driver increments on [s, t] enter.
    let mut lnd =
        Table::new("conditional_variance", &["hurst", "s", "t", "empirical", "formula", "discrete", "std_error", "z"]);
    let min_lag = ((p.lnd_min_lag * n as f64).ceil() as usize).clamp(1, n - 1);
    for (hi, &h) in p.lnd_hurst.iter().enumerate() {
        let pairs = draw_pairs(&rng, 500_000 + 1_000 * hi as u64, p.lnd_pairs, n, min_lag);
        let params = HurstParams::new(h)?;
        let weights = volterra_cell_weights(h, tgrid.step(), n);
        let samples = try_par_map(&seeds, |&seed| {
            let bm = sample_two_sided_bm(seed, tgrid, 1)?;
            let w1 = |a: usize, b: usize| {
                let acc: f64 = (a..b).map(|j| weights[b - 1 - j] * (bm.values[j + 1] - bm.values[j])).sum();
                params.c_h * acc
            };
            Ok(pairs.iter().map(|&(a, b)| w1(a, b)).collect::<Vec<f64>>())
        })?;
        let mut worst: f64 = 0.0;
        for (j, &(a, b)) in pairs.iter().enumerate() {
            let sq: Vec<f64> = samples.iter().map(|s| s[j] * s[j]).collect();
            let (var, se) = mean_with_se(&sq);
            let (s, t) = (tgrid.node(a), tgrid.node(b));
            let formula = params.c_tilde * (t - s).powf(2.0 * h);
            let discrete = params.c_h * params.c_h * tgrid.step() * weights[..b - a].iter().map(|w| w * w).sum::<f64>();
            let z = (var - formula) / se;
            worst = worst.max(z.abs());
            lnd.push(vec![num(h), num(s), num(t), num(var), num(formula), num(discrete), num(se), num(z)]);
        }
        if !pairs.is_empty() {
            out.checks.push(Check::le(format!("conditional variance max |z| at H={h}"), worst, p.max_z));
        }
    }
    out.tables.push(lnd);
    Ok(out)
}
