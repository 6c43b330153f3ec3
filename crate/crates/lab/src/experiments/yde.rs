//! yde: Young ODE solver against closed forms and a classical ODE solve,
//! a-priori constants over a family, Picard/Euler agreement, and sewing
//! convergence of a smooth germ.

use regnoise_core::averaging::SpectralAverage;
use regnoise_core::gaussian::sample_fbm_exact;
use regnoise_core::gridcore::TimeGrid;
use regnoise_core::stats::median;
use regnoise_core::yde::{compare_solutions, solve_yde, SolverSettings, YdeProblem, YdeScheme};
use regnoise_core::young::{sew, FnGerm};
use serde::{Deserialize, Serialize};

use super::fields::{linear_field, smooth_drift, smooth_drift_exact};
use super::{replica_seeds, try_par_map, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, Table};
use crate::svg::{Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("lambda", "rate of the linear drift b(x) = lambda x"),
    ("theta0", "initial value of the linear case"),
    ("hurst", "Hurst index of the rough paths, in (0,1)"),
    ("x0", "initial value of the classical-ODE cross-check"),
    ("family_steps", "time steps of each a-priori family member (multiple of 4)"),
    ("gamma", "declared time exponent of the averaged field"),
    ("nu", "declared spatial exponent of the averaged field; gamma (1 + nu) > 1 is required"),
    ("sewing_levels", "dyadic levels of the sewing check (>= 3)"),
    ("rk4_substeps", "RK4 substeps per path cell in the classical oracle"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YdeParams {
    pub lambda: f64,
    pub theta0: f64,
    pub hurst: f64,
    pub x0: f64,
    pub family_steps: usize,
    pub gamma: f64,
    pub nu: f64,
    pub sewing_levels: usize,
    pub rk4_substeps: usize,
}

impl Default for YdeParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            theta0: 1.0,
            hurst: 0.4,
            x0: 0.2,
            family_steps: 512,
            gamma: 1.0,
            nu: 1.0,
            sewing_levels: 5,
            rk4_substeps: 8,
        }
    }
}

impl YdeParams {
    pub fn validate(&self, cfg: &ExperimentConfig, d: &mut Diagnostics) {
        d.hurst("params.hurst", self.hurst);
        d.range("params.gamma", self.gamma, f64::MIN_POSITIVE, 1.0);
        d.range("params.nu", self.nu, f64::MIN_POSITIVE, 1.0);
        d.young("params.gamma", self.gamma, self.nu);
        d.range("params.lambda", self.lambda, -4.0, 4.0);
        d.range("params.theta0", self.theta0, -4.0, 4.0);
        d.range("params.x0", self.x0, -3.0, 3.0);
        if self.family_steps < 8 || self.family_steps % 4 != 0 {
            d.push("params.family_steps", "must be a multiple of 4, at least 8");
        }
        if self.sewing_levels < 3 {
            d.push("params.sewing_levels", "at least 3 levels");
        }
        if cfg.resolution.n_time >> self.sewing_levels == 0 {
            d.push("params.sewing_levels", "more levels than the time grid resolves");
        }
        if self.rk4_substeps == 0 {
            d.push("params.rk4_substeps", "must be positive");
        }
    }

    fn settings(&self) -> SolverSettings {
        SolverSettings { exponents: (self.gamma, self.nu), ..Default::default() }
    }
}

pub fn run(cfg: &ExperimentConfig, p: &YdeParams) -> Result<Outcome> {
    let n = cfg.resolution.n_time;
    let tgrid = TimeGrid::unit(1.0, n)?;
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    let settings = p.settings();
    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };

    // Linear drift: θ_t = θ_0 e^{λt}.
    let lin = linear_field([[p.lambda, 0.0], [0.0, 0.0]], 1, tgrid);
    let lin_sol = solve_yde(&YdeProblem::new(&lin, &[p.theta0]).with_settings(settings))?;
    let exact = |t: f64| p.theta0 * (p.lambda * t).exp();
    let lin_err = (0..=n)
        .map(|k| {
            (lin_sol.path.values[k] - exact(tgrid.node(k))).abs() / exact(tgrid.node(k)).abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    out.checks.push(Check::lt("linear drift relative error", lin_err, 1e-4));

    // Grönwall: shifted initial value.
    let cmp = compare_solutions(&lin, &lin, &[p.theta0], &[p.theta0 + 1e-3], settings)?;
    out.checks.push(Check::le("linear Gronwall ratio", cmp.ratio, p.lambda.abs().exp() * 1.1));

    // Smooth drift along a rough path against RK4 on x' = b(x) + w'.
    let b = smooth_drift();
    let main_seed = seeds.first().copied().unwrap_or(cfg.seed);
    let w = sample_fbm_exact(p.hurst, tgrid, main_seed, 1)?;
    let a = SpectralAverage::new(&b, &w, 1)?;
    let rough = solve_yde(&YdeProblem::new(&a, &[p.x0]).with_settings(settings))?;
    let dt = tgrid.step();
    let h = dt / p.rk4_substeps as f64;
    let mut x = p.x0;
    let mut classical = vec![x];
    for k in 0..n {
        let slope = (w.values[k + 1] - w.values[k]) / dt;
        let f = |y: f64| smooth_drift_exact(y) + slope;
        for _ in 0..p.rk4_substeps {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        classical.push(x);
    }
    let ode_err = (0..=n).map(|k| (rough.path.values[k] + w.values[k] - classical[k]).abs()).fold(0.0, f64::max);
    out.checks.push(Check::lt("classical ODE sup deviation", ode_err, 1e-3));

    // Picard cross-check from the same data.
    let picard_settings = SolverSettings { scheme: YdeScheme::Picard, ..settings };
    let picard = solve_yde(&YdeProblem::new(&a, &[p.x0]).with_settings(picard_settings))?;
    let agree = rough.path.values.iter().zip(&picard.path.values).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let tol = rough.tolerance(&settings).max(picard.scheme_error);
    out.checks.push(Check::lt("Picard/Euler agreement / scheme tolerance", agree / tol, 5.0));

    let mut traj =
        Table::new("trajectories", &["t", "linear", "linear_exact", "rough", "picard", "classical_minus_path"]);
    let stride = (n / 512).max(1);
    for k in (0..=n).step_by(stride) {
        let t = tgrid.node(k);
        traj.push(vec![
            num(t),
            num(lin_sol.path.values[k]),
            num(exact(t)),
            num(rough.path.values[k]),
            num(picard.path.values[k]),
            num(classical[k] - w.values[k]),
        ]);
    }
    out.tables.push(traj);

    // A-priori constants over a family of paths and initial values.
    let fgrid = TimeGrid::unit(1.0, p.family_steps)?;
    let family = try_par_map(&seeds.iter().copied().enumerate().collect::<Vec<_>>(), |&(i, seed)| {
        let w = sample_fbm_exact(p.hurst, fgrid, seed, 1)?;
        let a = SpectralAverage::new(&b, &w, 1)?;
        let x0 = -1.0 + 2.0 * (i as f64 + 0.5) / seeds.len() as f64;
        let sol = solve_yde(&YdeProblem::new(&a, &[x0]).with_settings(settings))?;
        Ok((seed, x0, sol))
    })?;
    let mut apriori =
        Table::new("apriori", &["seed", "theta0", "path_seminorm", "field_norm", "seminorm_ratio", "sup_ratio"]);
    let mut fan = Chart::new("solution fan", "t", "theta");
    for (seed, x0, sol) in &family {
        let r = &sol.apriori;
        apriori.push(vec![
            seed.to_string(),
            num(*x0),
            num(r.path_seminorm),
            num(r.field_norm),
            num(r.seminorm_ratio),
            num(r.sup_ratio),
        ]);
        let step = (p.family_steps / 128).max(1);
        let pts = (0..=p.family_steps).step_by(step).map(|k| (fgrid.node(k), sol.path.values[k])).collect();
        fan = fan.with(Series::line(format!("{x0:.2}"), pts));
    }
    out.tables.push(apriori);
    out.plot("solution_fan", fan.render());
    let ratios: Vec<f64> = family.iter().map(|f| f.2.apriori.seminorm_ratio).collect();
    if ratios.len() > 1 {
        let med = median(&ratios);
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        out.checks.push(Check::lt("a-priori constant max / median", max / med, 2.0));
    }

    // Sewing of the smooth germ cos(2s)(e^t − e^s) against its closed form.
    let germ = FnGerm {
        dim: 1,
        gamma: 1.0,
        beta: 2.0,
        f: |a: usize, b: usize, o: &mut [f64]| {
            o[0] = (2.0 * tgrid.node(a)).cos() * (tgrid.node(b).exp() - tgrid.node(a).exp())
        },
    };
    let integral = sew(&germ, tgrid, p.sewing_levels)?;
    let e = std::f64::consts::E;
    let exact_rs = (e * (2f64.cos() + 2.0 * 2f64.sin()) - 1.0) / 5.0;
    let rs_err = (integral.path.values[n] - exact_rs).abs();
    out.checks.push(Check::lt("sewing vs Riemann-Stieltjes closed form", rs_err, 1e-6));
    let target = 2f64.powf(1.0 - germ.beta);
    let worst = integral.contraction_ratios.iter().map(|r| (r - target).abs() / target).fold(0.0, f64::max);
    out.checks.push(Check::le("sewing contraction ratio relative gap", worst, 0.2));
    let mut sewing = Table::new("sewing", &["level", "level_difference", "contraction_ratio", "target_ratio"]);
    for (l, d) in integral.level_differences.iter().enumerate() {
        let ratio = if l == 0 { f64::NAN } else { integral.contraction_ratios.get(l - 1).copied().unwrap_or(f64::NAN) };
        sewing.push(vec![l.to_string(), num(*d), num(ratio), num(target)]);
    }
    out.tables.push(sewing);
    let pts = integral.level_differences.iter().enumerate().map(|(l, d)| (2f64.powi(l as i32), *d)).collect();
    out.plot(
        "sewing_levels",
        Chart::new("sewing refinement differences", "refinement factor", "sup difference")
            .log_log()
            .with(Series::markers("levels", pts))
            .render(),
    );
    Ok(out)
}
