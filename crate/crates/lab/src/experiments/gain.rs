//! gain: measured spatial regularity of the averaged drift `T^{W^H} b`
//! against `α + 1/(2H)`, and its ordering in `H`.

use regnoise_core::averaging::{gain_replica, predicted_gain_exponent, summarize_gain, GainResolution};
use serde::{Deserialize, Serialize};

use super::{replica_seeds, try_par_map, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, Table};
use crate::svg::{Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("alpha", "regularity of the synthesized drift, in [-1, 1]"),
    ("hurst", "Hurst index of the main gain check, in [0.1, 0.8]"),
    ("trend_hurst", "Hurst indices of the monotonicity check (increasing order)"),
    ("control", "also run the zero-path control (no gain expected)"),
    ("gain_fraction", "fraction of the predicted gain 1/(2H) required"),
    ("slack", "allowance subtracted from the required exponent"),
    ("blocks", "Littlewood-Paley blocks in the regression (>= 4)"),
    ("j_min", "first block of the regression"),
    ("calibrate_drift", "rescale the drift's blocks so its measured exponent equals alpha"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainParams {
    pub alpha: f64,
    pub hurst: f64,
    pub trend_hurst: Vec<f64>,
    pub control: bool,
    pub gain_fraction: f64,
    pub slack: f64,
    pub blocks: i32,
    pub j_min: i32,
    pub calibrate_drift: bool,
}

impl Default for GainParams {
    fn default() -> Self {
        let res = GainResolution::default();
        Self {
            alpha: 0.5,
            hurst: 0.5,
            trend_hurst: vec![0.2, 0.4, 0.6],
            control: true,
            gain_fraction: 0.8,
            slack: 0.15,
            blocks: res.blocks,
            j_min: res.j_min,
            calibrate_drift: res.calibrate_drift,
        }
    }
}

impl GainParams {
    pub fn validate(&self, cfg: &ExperimentConfig, d: &mut Diagnostics) {
        d.range("params.alpha", self.alpha, -1.0, 1.0);
        d.hurst("params.hurst", self.hurst);
        d.range("params.hurst", self.hurst, 0.1, 0.8);
        for (i, h) in self.trend_hurst.iter().enumerate() {
            d.hurst(&format!("params.trend_hurst[{i}]"), *h);
            d.range(&format!("params.trend_hurst[{i}]"), *h, 0.1, 0.8);
        }
        if self.trend_hurst.windows(2).any(|w| w[1] <= w[0]) {
            d.push("params.trend_hurst", "must be strictly increasing");
        }
        if self.blocks < 4 {
            d.push("params.blocks", "at least four blocks are needed for a regression");
        }
        if self.j_min < 0 {
            d.push("params.j_min", "must be nonnegative");
        }
        let m = cfg.resolution.m_space;
        if m.is_power_of_two() && self.j_min + self.blocks + 3 > m.trailing_zeros() as i32 {
            d.push("resolution.m_space", format!("{m} points resolve too few blocks above j_min + blocks"));
        }
        if cfg.resolution.n_time > regnoise_core::gaussian::MAX_EXACT_INTERVALS {
            d.push("resolution.n_time", "exceeds the exact sampler's limit");
        }
    }

    fn resolution(&self, cfg: &ExperimentConfig) -> GainResolution {
        GainResolution {
            space_points: cfg.resolution.m_space,
            j_min: self.j_min,
            blocks: self.blocks,
            calibrate_drift: self.calibrate_drift,
            max_time_steps: cfg.resolution.n_time,
            ..Default::default()
        }
    }
}

fn label(h: Option<f64>) -> String {
    h.map_or("none".into(), num)
}

pub fn run(cfg: &ExperimentConfig, p: &GainParams) -> Result<Outcome> {
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    let res = p.resolution(cfg);
    let mut hs: Vec<Option<f64>> = vec![Some(p.hurst)];
    for h in &p.trend_hurst {
        if !hs.contains(&Some(*h)) {
            hs.push(Some(*h));
        }
    }
    if p.control {
        hs.push(None);
    }
    let jobs: Vec<(Option<f64>, u64)> = hs.iter().flat_map(|h| seeds.iter().map(move |s| (*h, *s))).collect();
    let samples = try_par_map(&jobs, |&(h, seed)| gain_replica(p.alpha, h, seed, &res))?;

    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };
    let mut table = Table::new(
        "gain",
        &[
            "seed",
            "H",
            "alpha_drift",
            "alpha_measured",
            "beta_measured",
            "gamma_measured",
            "beta_predicted",
            "r2",
            "time_steps",
            "under_resolved",
        ],
    );
    for s in &samples {
        table.push(vec![
            s.seed.to_string(),
            label(s.hurst),
            num(s.alpha_drift),
            num(s.alpha_measured),
            num(s.beta_measured),
            num(s.gamma_measured),
            num(s.beta_predicted),
            num(s.r2),
            s.time_steps.to_string(),
            s.under_resolved.to_string(),
        ]);
    }
    out.tables.push(table);

    let mut summary = Table::new("gain_summary", &["H", "beta_median", "gamma_median", "beta_predicted", "replicas"]);
    let mut medians = Vec::new();
    for h in &hs {
        let group: Vec<_> = samples.iter().filter(|s| s.hurst == *h).cloned().collect();
        let count = group.len();
        let r = summarize_gain(p.alpha, *h, group);
        summary.push(vec![
            label(*h),
            num(r.beta_median),
            num(r.gamma_median),
            num(r.beta_predicted),
            count.to_string(),
        ]);
        medians.push((*h, r.beta_median));
    }
    out.tables.push(summary);

    let median_of = |h: f64| medians.iter().find(|m| m.0 == Some(h)).map(|m| m.1).unwrap_or(f64::NAN);
    let required = p.alpha + p.gain_fraction / (2.0 * p.hurst) - p.slack;
    out.checks.push(Check::ge(format!("median beta at H={}", p.hurst), median_of(p.hurst), required));
    if p.trend_hurst.len() >= 2 {
        let trend: Vec<f64> = p.trend_hurst.iter().map(|h| median_of(*h)).collect();
        let ordered = trend.windows(2).all(|w| w[1] <= w[0]);
        out.checks.push(Check::holds("median beta nonincreasing in H", ordered));
    }

    let mut chart = Chart::new("regularity of the averaged drift", "H", "spatial exponent");
    let pts: Vec<(f64, f64)> = samples.iter().filter_map(|s| Some((s.hurst?, s.beta_measured))).collect();
    chart = chart.with(Series::markers("replicas", pts));
    let mut med: Vec<(f64, f64)> = medians.iter().filter_map(|m| Some((m.0?, m.1))).collect();
    med.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pred: Vec<(f64, f64)> = med.iter().map(|m| (m.0, predicted_gain_exponent(p.alpha, Some(m.0)))).collect();
    chart = chart.with(Series::line("median", med)).with(Series::line("alpha + 1/(2H) - 0.1", pred));
    out.plot("gain", chart.render());
    Ok(out)
}
