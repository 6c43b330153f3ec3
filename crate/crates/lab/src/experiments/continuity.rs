//! continuity: particle push-forward of a measure, with densities carried by
//! the Jacobian form and a duality cross-check.

use regnoise_core::gaussian::sample_fbm_exact;
use regnoise_core::gridcore::{SpaceGrid, TimeGrid};
use regnoise_core::pde::{duality_check, solve_continuity, ParticleMeasure};
use regnoise_core::yde::SolverSettings;
use serde::{Deserialize, Serialize};

use super::fields::{linear_field, rotational_field};
use super::{replica_seeds, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, Table};
use crate::svg::{Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("lambda", "rate of the 1D linear drift b(x) = lambda x"),
    ("half_width", "particles start on [-half_width, half_width)"),
    ("output_times", "equally spaced output times"),
    ("density_tolerance", "bound on density errors"),
    ("duality_tolerance", "bound on the particle / density pairing gap"),
    ("rotational_hurst", "Hurst index of the 2D path of the divergence-free case"),
    ("rotational_steps", "time steps of the divergence-free case (power of two)"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuityParams {
    pub lambda: f64,
    pub half_width: f64,
    pub output_times: usize,
    pub density_tolerance: f64,
    pub duality_tolerance: f64,
    pub rotational_hurst: f64,
    pub rotational_steps: usize,
}

impl Default for ContinuityParams {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            half_width: 2.0,
            output_times: 4,
            density_tolerance: 1e-3,
            duality_tolerance: 1e-2,
            rotational_hurst: 0.4,
            rotational_steps: 256,
        }
    }
}

impl ContinuityParams {
    pub fn validate(&self, cfg: &ExperimentConfig, d: &mut Diagnostics) {
        d.range("params.lambda", self.lambda, -2.0, 2.0);
        d.range("params.half_width", self.half_width, 0.25, 2.5);
        if self.output_times == 0 || self.output_times > cfg.resolution.n_time {
            d.push("params.output_times", "must lie in [1, n_time]");
        }
        d.positive("params.density_tolerance", self.density_tolerance);
        d.positive("params.duality_tolerance", self.duality_tolerance);
        d.hurst("params.rotational_hurst", self.rotational_hurst);
        if self.rotational_steps < 8 || !self.rotational_steps.is_power_of_two() {
            d.push("params.rotational_steps", "must be a power of two, at least 8");
        }
    }
}

pub fn run(cfg: &ExperimentConfig, p: &ContinuityParams) -> Result<Outcome> {
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };
    let settings = SolverSettings::default();
    let n = cfg.resolution.n_time;
    let count = p.output_times;
    let nodes: Vec<usize> = (0..=count).map(|i| i * n / count).collect();

    // Linear drift: ρ_t(Φ_t(x)) = ρ_0(x) e^{−λt}.
    let lin = linear_field([[p.lambda, 0.0], [0.0, 0.0]], 1, TimeGrid::unit(1.0, n)?);
    let grid = SpaceGrid::new(p.half_width, cfg.resolution.m_space, 1)?;
    let rho0 = |x: &[f64]| (-2.0 * x[0] * x[0]).exp();
    let v0 = ParticleMeasure::from_density(&grid, rho0);
    let sol = solve_continuity(&lin, &v0, &nodes, &settings)?;
    let d0 = v0.density.as_ref().expect("density carried");
    let mut mass_gap: f64 = 0.0;
    let mut dens_err: f64 = 0.0;
    let mut table = Table::new("particles", &["t", "x0", "position", "weight", "density", "density_exact"]);
    for (m, &k) in sol.measures.iter().zip(&nodes) {
        mass_gap = mass_gap.max((m.mass() - v0.mass()).abs());
        let t = k as f64 / n as f64;
        let dens = m.density.as_ref().expect("density carried");
        for i in 0..v0.count() {
            let exact = d0[i] * (-p.lambda * t).exp();
            dens_err = dens_err.max((dens[i] - exact).abs());
            table.push(vec![
                num(t),
                num(v0.positions[i][0]),
                num(m.positions[i][0]),
                num(m.weights[i]),
                num(dens[i]),
                num(exact),
            ]);
        }
    }
    out.tables.push(table);
    out.checks.push(Check::le("particle mass change", mass_gap, 0.0));
    out.checks.push(Check::lt("linear drift density error", dens_err, p.density_tolerance));

    let phi = |x: &[f64]| (-(x[0] - 0.3).powi(2)).exp();
    let qgrid = SpaceGrid::new(4.0, 256, 1)?;
    let dual = duality_check(&lin, &v0, &sol, count, rho0, phi, &qgrid, &settings)?;
    out.checks.push(Check::lt("duality gap, particles vs density", dual.deviation, p.duality_tolerance));
    out.checks.push(Check::holds("particle pairing equals push-forward", dual.particles == dual.pushforward));

    let mut chart = Chart::new("density along particles", "position", "density");
    for (m, &k) in sol.measures.iter().zip(&nodes) {
        let dens = m.density.as_ref().expect("density carried");
        let pts = m.positions.iter().zip(dens).map(|(x, r)| (x[0], *r)).collect();
        chart = chart.with(Series::line(format!("t = {}", num(k as f64 / n as f64)), pts));
    }
    out.plot("continuity_density", chart.render());

    // Divergence-free drift: densities constant along particles.
    let nr = p.rotational_steps;
    let w2 = sample_fbm_exact(p.rotational_hurst, TimeGrid::unit(1.0, nr)?, seeds[0], 2)?;
    let rot = rotational_field(SpaceGrid::new(4.0, 64, 2)?, 1.5, &w2)?;
    let grid2 = SpaceGrid::new(1.0, 8, 2)?;
    let v2 = ParticleMeasure::from_density(&grid2, |x| 1.0 + 0.5 * x[0]);
    let sol2 = solve_continuity(&rot, &v2, &[nr / 2, nr], &settings)?;
    let d2 = v2.density.as_ref().expect("density carried");
    let mut rot_err: f64 = 0.0;
    for m in &sol2.measures {
        mass_gap = mass_gap.max((m.mass() - v2.mass()).abs());
        for (d, r) in m.density.as_ref().expect("density carried").iter().zip(d2) {
            rot_err = rot_err.max((d - r).abs());
        }
    }
    out.checks.push(Check::lt("divergence-free density change", rot_err, p.density_tolerance));
    out.checks.push(Check::le("particle mass change, divergence-free", mass_gap, 0.0));

    let mut summary = Table::new("continuity_checks", &["quantity", "value"]);
    for (q, v) in [
        ("mass_gap", mass_gap),
        ("linear_density_error", dens_err),
        ("duality_particles", dual.particles),
        ("duality_density", dual.density),
        ("duality_deviation", dual.deviation),
        ("divergence_free_density_error", rot_err),
        ("scheme_error", sol.scheme_error.max(sol2.scheme_error)),
    ] {
        summary.push(vec![q.into(), num(v)]);
    }
    out.tables.push(summary);
    Ok(out)
}
