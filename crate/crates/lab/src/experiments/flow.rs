//! flow: flow property, inverse, variational equations and the Jacobian
//! identity on a grid of initial conditions.

use regnoise_core::averaging::{AveragedDrift, SpectralAverage};
use regnoise_core::gaussian::sample_fbm_exact;
use regnoise_core::gridcore::{SpaceGrid, TimeGrid};
use regnoise_core::yde::{
    assemble_atlas, flow_point, jacobian_identity_check, second_variation, variational_derivative, FlowAtlas,
    FlowOptions,
};
use serde::{Deserialize, Serialize};

use super::fields::{expm, linear_field, rotational_field, smooth_drift, Mat};
use super::{replica_seeds, try_par_map, Check, Outcome};
use crate::config::{Diagnostics, ExperimentConfig};
use crate::error::Result;
use crate::io::{num, FlatArray, Table};
use crate::svg::{Chart, Series};

pub const PARAM_DOCS: &[(&str, &str)] = &[
    ("hurst", "Hurst index of the path driving the 1D smooth-drift flow"),
    ("half_width", "initial conditions fill [-half_width, half_width)"),
    ("matrix", "2x2 matrix M of the linear drift b(x) = Mx"),
    ("linear_steps", "time steps of the linear case (multiple of 8)"),
    ("linear_points", "initial conditions per axis in the linear case"),
    ("rotational_hurst", "Hurst index of the 2D path of the divergence-free case"),
    ("rotational_amplitude", "amplitude of the stream function exp(-|x|^2)"),
    ("rotational_steps", "time steps of the divergence-free case (multiple of 8)"),
    ("rotational_points", "initial conditions per axis of the divergence-free case"),
    ("tolerance", "bound on closed-form and Jacobian-identity errors"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    pub hurst: f64,
    pub half_width: f64,
    pub matrix: Mat,
    pub linear_steps: usize,
    pub linear_points: usize,
    pub rotational_hurst: f64,
    pub rotational_amplitude: f64,
    pub rotational_steps: usize,
    pub rotational_points: usize,
    pub tolerance: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            hurst: 0.3,
            half_width: 1.0,
            matrix: [[0.3, -0.5], [0.4, -0.2]],
            linear_steps: 512,
            linear_points: 8,
            rotational_hurst: 0.4,
            rotational_amplitude: 1.5,
            rotational_steps: 256,
            rotational_points: 8,
            tolerance: 1e-3,
        }
    }
}

fn steps_ok(d: &mut Diagnostics, field: &str, n: usize) {
    if n < 8 || n % 8 != 0 || !n.is_power_of_two() {
        d.push(field, "must be a power of two, at least 8");
    }
}

impl FlowParams {
    pub fn validate(&self, cfg: &ExperimentConfig, d: &mut Diagnostics) {
        d.hurst("params.hurst", self.hurst);
        d.hurst("params.rotational_hurst", self.rotational_hurst);
        d.range("params.half_width", self.half_width, 1e-3, 3.0);
        d.range("params.rotational_amplitude", self.rotational_amplitude, 0.0, 4.0);
        d.positive("params.tolerance", self.tolerance);
        if self.matrix.iter().flatten().any(|v| !v.is_finite() || v.abs() > 4.0) {
            d.push("params.matrix", "entries must be finite with modulus at most 4");
        }
        steps_ok(d, "params.linear_steps", self.linear_steps);
        steps_ok(d, "params.rotational_steps", self.rotational_steps);
        for (f, v) in
            [("params.linear_points", self.linear_points), ("params.rotational_points", self.rotational_points)]
        {
            if !(3..=64).contains(&v) {
                d.push(f, "must lie in [3, 64]");
            }
        }
        if cfg.resolution.m_space < 3 {
            d.push("resolution.m_space", "the finite-difference checks need at least 3 points");
        }
    }
}

/// Per-point trajectories in parallel, gathered in grid order.
fn flow<A: AveragedDrift + Sync + ?Sized>(a: &A, grid: SpaceGrid, opts: &FlowOptions) -> Result<FlowAtlas> {
    let idx: Vec<usize> = (0..grid.size()).collect();
    let points = try_par_map(&idx, |&p| flow_point(a, &grid.point(p)[..grid.dim()], opts))?;
    Ok(assemble_atlas(grid, a.tgrid(), opts.clone(), points)?)
}

pub fn run(cfg: &ExperimentConfig, p: &FlowParams) -> Result<Outcome> {
    let seeds = replica_seeds(cfg.seed, cfg.seeds);
    let seed = seeds[0];
    let mut out = Outcome { replica_seeds: seeds.clone(), ..Default::default() };
    let mut summary = Table::new("flow_checks", &["case", "quantity", "value", "reference"]);
    let mut note = |case: &str, q: &str, v: f64, r: f64| summary.push(vec![case.into(), q.into(), num(v), num(r)]);

    // Linear drift: Φ_t = e^{tM}, DΦ_t = e^{tM}, D²Φ = 0, ψ_t = e^{−tM}.
    let n = p.linear_steps;
    let lgrid = TimeGrid::unit(1.0, n)?;
    let lin = linear_field(p.matrix, 2, lgrid);
    let grid = SpaceGrid::new(p.half_width, p.linear_points, 2)?;
    let mut opts = FlowOptions::new(n);
    opts.order = 2;
    opts.psi_nodes = vec![n / 2, n];
    let mut atlas = flow(&lin, grid, &opts)?;
    let m = &p.matrix;
    let mut closed: f64 = 0.0;
    let tr = m[0][0] + m[1][1];
    for ti in 0..atlas.times() {
        let t = lgrid.node(atlas.node_of(ti));
        let e = expm(m, t);
        for q in 0..grid.size() {
            let x = grid.point(q);
            let (phi, dphi) = (atlas.phi(ti, q), atlas.dphi(ti, q));
            for c in 0..2 {
                let exact = e[c][0] * x[0] + e[c][1] * x[1];
                closed = closed.max((phi[c] - exact).abs() / (1.0 + exact.abs()));
                for k in 0..2 {
                    closed = closed.max((dphi[c][k] - e[c][k]).abs() / (1.0 + e[c][k].abs()));
                }
            }
            closed = closed.max((atlas.jac(ti, q) - (t * tr).exp()).abs() / (t * tr).exp());
            closed = closed.max(atlas.ddphi(ti, q).iter().flatten().flatten().fold(0.0, |a, v| a.max(v.abs())));
        }
    }
    for (i, &node) in opts.psi_nodes.iter().enumerate() {
        let inv = expm(m, -lgrid.node(node));
        for q in 0..grid.size() {
            let x = grid.point(q);
            let psi = atlas.psi(i, q);
            for c in 0..2 {
                closed = closed.max((psi[c] - (inv[c][0] * x[0] + inv[c][1] * x[1])).abs());
            }
        }
    }
    out.checks.push(Check::lt("linear drift closed forms", closed, p.tolerance));
    let jr = jacobian_identity_check(&lin, &mut atlas)?;
    note("linear", "closed_form_error", closed, p.tolerance);
    note("linear", "jacobian_identity", jr.max_deviation, p.tolerance);
    note("linear", "flow_deviation / tolerance", atlas.flow_deviation / atlas.tolerance(), 5.0);

    // Smooth drift along a rough path on the configured grid of initial conditions.
    let n = cfg.resolution.n_time;
    let tgrid = TimeGrid::unit(1.0, n)?;
    let w = sample_fbm_exact(p.hurst, tgrid, seed, 1)?;
    let a = SpectralAverage::new(&smooth_drift(), &w, 1)?;
    let grid = SpaceGrid::new(p.half_width, cfg.resolution.m_space, 1)?;
    let mut opts = FlowOptions::new(n);
    opts.order = 2;
    let mut atlas = flow(&a, grid, &opts)?;
    let tol = atlas.tolerance();
    out.checks.push(Check::lt("flow property deviation / scheme tolerance", atlas.flow_deviation / tol, 5.0));
    out.checks.push(Check::lt("inverse flow mismatch / scheme tolerance", atlas.inversion_mismatch / tol, 10.0));
    let jr = jacobian_identity_check(&a, &mut atlas)?;
    out.checks.push(Check::lt("Jacobian identity, smooth drift on rough path", jr.max_deviation, p.tolerance));
    let first = variational_derivative(&a, &mut atlas)?;
    let h = first.fd_step;
    out.checks.push(Check::lt(
        "first variation vs finite differences",
        first.fd_deviation,
        f64::max(1e-2, 10.0 * h * h),
    ));
    let second = second_variation(&a, &mut atlas)?;
    out.checks.push(Check::lt("second variation vs finite differences", second.fd_deviation, f64::max(2e-2, 10.0 * h)));
    note("rough-1d", "flow_deviation / tolerance", atlas.flow_deviation / tol, 5.0);
    note("rough-1d", "jacobian_identity", jr.max_deviation, p.tolerance);
    note("rough-1d", "jacobian_bound_constant", jr.bound_constant, f64::NAN);
    note("rough-1d", "growth_constant", first.growth_constant, f64::NAN);
    note("rough-1d", "first_variation_fd", first.fd_deviation, f64::max(1e-2, 10.0 * h * h));
    note("rough-1d", "second_variation_fd", second.fd_deviation, f64::max(2e-2, 10.0 * h));

    let last = atlas.times() - 1;
    let mut points =
        Table::new("flow_points", &["x0", "phi_T", "dphi_T", "d2phi_T", "jac_T", "psi_T", "flow_deviation"]);
    for q in 0..grid.size() {
        let fp = &atlas.points[q];
        points.push(vec![
            num(grid.point(q)[0]),
            num(atlas.phi(last, q)[0]),
            num(atlas.dphi(last, q)[0][0]),
            num(atlas.ddphi(last, q)[0][0][0]),
            num(atlas.jac(last, q)),
            num(atlas.psi(0, q)[0]),
            num(fp.flow_deviation),
        ]);
    }
    out.tables.push(points);
    let times = atlas.times();
    let data: Vec<f64> =
        (0..times).flat_map(|ti| (0..grid.size()).map(move |q| (ti, q))).map(|(ti, q)| atlas.phi(ti, q)[0]).collect();
    out.arrays.push((
        "flow_phi".into(),
        FlatArray::new(vec![times as u64, grid.size() as u64], vec![0.0, 1.0, -p.half_width, p.half_width], data)?,
    ));
    let mut fan = Chart::new("flow of the averaged equation", "t", "phi(t, x0)");
    for q in (0..grid.size()).step_by((grid.size() / 16).max(1)) {
        let pts = (0..times).map(|ti| (tgrid.node(atlas.node_of(ti)), atlas.phi(ti, q)[0])).collect();
        fan = fan.with(Series::line(format!("{:.2}", grid.point(q)[0]), pts));
    }
    out.plot("flow_fan", fan.render());

    // Divergence-free drift in 2D: det DΦ ≡ 1.
    let n = p.rotational_steps;
    let w2 = sample_fbm_exact(p.rotational_hurst, TimeGrid::unit(1.0, n)?, seed, 2)?;
    let rot = rotational_field(SpaceGrid::new(4.0, 64, 2)?, p.rotational_amplitude, &w2)?;
    let grid = SpaceGrid::new(p.half_width, p.rotational_points, 2)?;
    let mut atlas = flow(&rot, grid, &FlowOptions::new(n))?;
    let jr = jacobian_identity_check(&rot, &mut atlas)?;
    let volume = (jr.min_jac - 1.0).abs().max((jr.max_jac - 1.0).abs());
    out.checks.push(Check::lt("Jacobian identity, divergence-free drift", jr.max_deviation, p.tolerance));
    out.checks.push(Check::lt("volume preservation, divergence-free drift", volume, p.tolerance));
    note("rotational-2d", "jacobian_identity", jr.max_deviation, p.tolerance);
    note("rotational-2d", "volume_defect", volume, p.tolerance);
    out.tables.push(summary);
    Ok(out)
}
