//! transport: characteristics solution of the averaged transport equation,
//! its weak residual against a frozen negative control, and the commutator.

use regnoise_core::averaging::SpectralAverage;
use regnoise_core::gaussian::sample_fbm_exact;
use regnoise_core::gridcore::{ScalarField, SpaceGrid, TimeGrid};
use regnoise_core::pde::{
    characteristic_constancy, commutator_germ_scaling, commutator_vanishing_check, default_eps_sweep,
    measure_time_exponent, probe_family, solve_transport, transport_weak_residual, TransportSolution, GAMMA_MARGIN,
};
use regnoise_core::yde::{compute_flow, FlowOptions, SolverSettings};
use serde::{Deserialize, Serialize};

use super::fields::{rotational_field, smooth_drift};
use super::{replica_seeds, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, FlatArray, Table};
use crate::svg::{Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("hurst", "Hurst index of the 1D path"),
    ("half_width", "the 1D solution lives on [-half_width, half_width)"),
    ("stored_times", "stored transport times (power of two, >= 8)"),
    ("levels", "dyadic (s,t) levels of the weak-residual sweep (>= 3)"),
    ("max_variation", "bound on max/min of the per-level residual ratios"),
    ("min_control_growth", "required growth of the frozen control's ratio"),
    ("germ_eps", "mollification widths of the commutator-germ scaling"),
    ("rotational_hurst", "Hurst index of the 2D path of the constancy check"),
    ("rotational_steps", "time steps of the constancy check (multiple of 16)"),
    ("commutator_points", "grid points of the commutator sweep (power of two)"),
    ("commutator_final", "bound on the last/first commutator sup of the sweep"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportParams {
    pub hurst: f64,
    pub half_width: f64,
    pub stored_times: usize,
    pub levels: usize,
    pub max_variation: f64,
    pub min_control_growth: f64,
    pub germ_eps: Vec<f64>,
    pub rotational_hurst: f64,
    pub rotational_steps: usize,
    pub commutator_points: usize,
    pub commutator_final: f64,
}

impl Default for TransportParams {
    fn default() -> Self {
        Self {
            hurst: 0.4,
            half_width: 3.0,
            stored_times: 32,
            levels: 5,
            max_variation: 2.0,
            min_control_growth: 10.0,
            germ_eps: vec![0.4, 0.2, 0.1],
            rotational_hurst: 0.4,
            rotational_steps: 256,
            commutator_points: 2048,
            commutator_final: 0.05,
        }
    }
}

impl TransportParams {
    pub fn validate(&self, cfg: &ExperimentConfig, d: &mut Diagnostics) {
        d.hurst("params.hurst", self.hurst);
        d.hurst("params.rotational_hurst", self.rotational_hurst);
        d.range("params.half_width", self.half_width, 0.5, 3.5);
        let n = cfg.resolution.n_time;
        if self.stored_times < 8 || !self.stored_times.is_power_of_two() {
            d.push("params.stored_times", "must be a power of two, at least 8");
        } else if n < 16 * self.stored_times {
            // Coarser paths leave too few fine steps for the flow's sewing to contract.
            d.push("resolution.n_time", "needs at least 16 steps per stored time");
        } else if self.levels < 3 || 1 << self.levels > self.stored_times {
            d.push("params.levels", "needs 3 <= levels and 2^levels <= stored_times");
        }
        d.positive("params.max_variation", self.max_variation);
        d.positive("params.min_control_growth", self.min_control_growth);
        if self.germ_eps.len() < 2 || self.germ_eps.iter().any(|e| !(*e > 0.0)) {
            d.push("params.germ_eps", "at least two positive widths");
        } else {
            let dx = 2.0 * self.half_width / cfg.resolution.m_space as f64;
            if self.germ_eps.iter().any(|e| *e < dx) {
                d.push("params.germ_eps", format!("widths must be at least the grid spacing {dx}"));
            }
        }
        if self.rotational_steps < 16 || !self.rotational_steps.is_power_of_two() {
            d.push("params.rotational_steps", "must be a power of two, at least 16");
        }
        if self.commutator_points < 256 || !self.commutator_points.is_power_of_two() {
            d.push("params.commutator_points", "must be a power of two, at least 256");
        }
        d.range("params.commutator_final", self.commutator_final, 0.0, 1.0);
    }
}

fn bump(grid: SpaceGrid) -> ScalarField {
    ScalarField::from_fn(grid, |x| x.iter().map(|v| (-2.0 * v * v).exp()).product())
}

fn uniform_nodes(n: usize, count: usize) -> Vec<usize> {
    (0..=count).map(|i| i * n / count).collect()
}

pub fn run(cfg: &ExperimentConfig, p: &TransportParams) -> Result<Outcome> {
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    let seed = seeds[0];
    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };
    let settings = SolverSettings::default();

    // 1D smooth drift along a rough path.
    let n = cfg.resolution.n_time;
    let w = sample_fbm_exact(p.hurst, TimeGrid::unit(1.0, n)?, seed, 1)?;
    let a = SpectralAverage::new(&smooth_drift(), &w, 1)?;
    let grid = SpaceGrid::new(p.half_width, cfg.resolution.m_space, 1)?;
    let mut opts = FlowOptions::new(n);
    opts.out_stride = n / p.stored_times;
    opts.psi_nodes = uniform_nodes(n, p.stored_times);
    let atlas = compute_flow(&a, &grid, &opts)?;
    let u0 = bump(SpaceGrid::new(4.0, 512, 1)?);
    let sol = solve_transport(&a, &u0, &atlas)?;

    let probes = probe_family(1, 2.0, 0.8);
    let good = transport_weak_residual(&sol, &a, &probes, None, p.levels)?;
    let frozen = TransportSolution::frozen(&u0, grid, sol.nodes.clone());
    let bad = transport_weak_residual(&frozen, &a, &probes, Some(good.gamma), p.levels)?;
    out.checks.push(Check::lt("weak residual ratio variation across levels", good.variation, p.max_variation));
    out.checks.push(Check::ge("frozen control residual growth", bad.growth, p.min_control_growth));
    let mut residual = Table::new("weak_residual", &["lag", "ratio", "control_ratio", "gamma"]);
    for (g, b) in good.levels.iter().zip(&bad.levels) {
        residual.push(vec![num(g.0), num(g.1), num(b.1), num(good.gamma)]);
    }
    out.tables.push(residual);
    let chart = Chart::new("weak residual / |t-s|^{2 gamma}", "t - s", "max ratio")
        .log_log()
        .with(Series::line("characteristics solution", good.levels.clone()))
        .with(Series::line("frozen datum", bad.levels.clone()));
    out.plot("weak_residual", chart.render());

    let gamma = measure_time_exponent(&a, &grid)?.min(1.0) - GAMMA_MARGIN;
    let germ = commutator_germ_scaling(&a, &sol, &atlas, &p.germ_eps, grid.size() / 2, gamma)?;
    out.checks.push(Check::ge("commutator germ exponent", germ.min_exponent, 2.0 * gamma - 0.1));
    let mut gt = Table::new("commutator_germ", &["eps", "exponent", "two_gamma"]);
    for (e, x) in p.germ_eps.iter().zip(&germ.exponents) {
        gt.push(vec![num(*e), num(*x), num(2.0 * gamma)]);
    }
    out.tables.push(gt);

    let m = grid.size();
    let data: Vec<f64> = sol.u.iter().flat_map(|u| u.values.iter().copied()).collect();
    out.arrays.push((
        "transport_u".into(),
        FlatArray::new(vec![sol.u.len() as u64, m as u64], vec![0.0, 1.0, -p.half_width, p.half_width], data)?,
    ));
    let mut slices = Chart::new("transported datum", "x", "u(t, x)");
    for (i, u) in sol.u.iter().enumerate().step_by((sol.u.len() / 4).max(1)) {
        let pts = (0..m).map(|q| (grid.point(q)[0], u.values[q])).collect();
        slices = slices.with(Series::line(format!("t = {}", num(sol.nodes[i] as f64 / n as f64)), pts));
    }
    out.plot("transport_slices", slices.render());

    // Constancy along characteristics of a divergence-free 2D field.
    let nr = p.rotational_steps;
    let w2 = sample_fbm_exact(p.rotational_hurst, TimeGrid::unit(1.0, nr)?, seed, 2)?;
    let sgrid = SpaceGrid::new(4.0, 64, 2)?;
    let rot = rotational_field(sgrid, 1.5, &w2)?;
    let grid2 = SpaceGrid::new(1.5, 16, 2)?;
    let mut opts2 = FlowOptions::new(nr);
    opts2.psi_nodes = uniform_nodes(nr, 4);
    let atlas2 = compute_flow(&rot, &grid2, &opts2)?;
    let sol2 = solve_transport(&rot, &bump(sgrid), &atlas2)?;
    let c = characteristic_constancy(&rot, &sol2, &SpaceGrid::new(1.0, 16, 2)?, &settings)?;
    out.checks.push(Check::le("constancy along characteristics / tolerance", c.max_deviation / c.tolerance, 5.0));

    // Commutator sweep for smooth data.
    let cgrid = SpaceGrid::new(std::f64::consts::PI, p.commutator_points, 1)?;
    let h = ScalarField::from_fn(cgrid, |x| x[0].sin() + 0.5 * (2.0 * x[0]).cos());
    let g = [ScalarField::from_fn(cgrid, |x| (-x[0] * x[0]).exp() + 0.3 * x[0])];
    let eps = default_eps_sweep(&cgrid);
    let sweep = commutator_vanishing_check(&h, &g, &eps, 1.5)?;
    out.checks.push(Check::lt("commutator sup, last / first", sweep.final_ratio, p.commutator_final));
    out.checks.push(Check::holds("commutator sup decreasing along the sweep", sweep.monotone));
    let mut ct = Table::new("commutator_sweep", &["eps", "sup"]);
    for (e, s) in sweep.eps.iter().zip(&sweep.sups) {
        ct.push(vec![num(*e), num(*s)]);
    }
    out.tables.push(ct);
    let pts = sweep.eps.iter().copied().zip(sweep.sups.iter().copied()).collect();
    out.plot(
        "commutator_sweep",
        Chart::new("commutator sup over the ball", "eps", "sup").log_log().with(Series::markers("sup", pts)).render(),
    );

    let mut summary = Table::new("transport_checks", &["quantity", "value"]);
    for (q, v) in [
        ("weak_residual_gamma", good.gamma),
        ("weak_residual_variation", good.variation),
        ("control_growth", bad.growth),
        ("increment_residual", sol.increment_residual),
        ("constancy_deviation", c.max_deviation),
        ("constancy_tolerance", c.tolerance),
        ("germ_min_exponent", germ.min_exponent),
        ("commutator_final_ratio", sweep.final_ratio),
        ("commutator_slope", sweep.slope),
    ] {
        summary.push(vec![q.into(), num(v)]);
    }
    out.tables.push(summary);
    Ok(out)
}
