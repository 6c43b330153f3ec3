//! Transport and continuity equations along the perturbed characteristics.
//!
//! The transport solution is `u_t = u_0 ∘ ψ_t` with `ψ_t` the inverse flow
//! from the Young equation; the continuity equation is solved by exact
//! particle pushforward. Weak formulations are probed against a fixed family
//! of tensor-product bumps, and the commutator
//! `R^ε(h, g) = (g·∇h)^ε − g·∇h^ε` is evaluated on the grid with central
//! differences for both gradients, so that it vanishes identically for
//! constant `g` or constant `h`.

use alloc::vec;
use alloc::vec::Vec;

use crate::averaging::AveragedDrift;
use crate::error::{invalid, Error, Result};
use crate::gridcore::{bump, Mollifier, ScalarField, SpaceGrid};
use crate::math::{exp, fabs, log, pow, sqrt};
use crate::stats::linear_fit;
use crate::yde::{characteristic, FlowAtlas, Reversed, SolverSettings};

/// Safety margin subtracted from the measured time exponent of the field.
pub const GAMMA_MARGIN: f64 = 0.05;
/// Allowed increase between consecutive sweep values of a "decreasing" sequence.
pub const MONOTONE_SLACK: f64 = 1.2;

// ---------------------------------------------------------------------------
// Transport

/// `u_t(x) = u_0(ψ_t(x))` on the atlas grid at the atlas' inverse-flow nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub grid: SpaceGrid,
    /// Time-grid node indices of the stored slices.
    pub nodes: Vec<usize>,
    pub u: Vec<ScalarField>,
    pub u0: ScalarField,
    /// `max |u_{s,t} + A_{s,t}·∇u_s| / max |u_{s,t}|` over consecutive stored
    /// times on interior nodes (only meaningful for smooth drifts).
    pub increment_residual: f64,
}

impl TransportSolution {
    /// `u_t = u_0` at every node: a deliberately wrong solution for negative
    /// controls.
    pub fn frozen(u0: &ScalarField, grid: SpaceGrid, nodes: Vec<usize>) -> Self {
        let slice = ScalarField::from_fn(grid, |x| u0.interpolate(x));
        let u = vec![slice; nodes.len()];
        Self { grid, nodes, u, u0: u0.clone(), increment_residual: f64::NAN }
    }

    /// `u(t_node, y) = u_0(ψ_t(y))` at an arbitrary point, by a backward
    /// characteristic.
    pub fn value_at<A: AveragedDrift + ?Sized>(
        &self,
        a: &A,
        settings: &SolverSettings,
        node: usize,
        y: &[f64],
    ) -> Result<(f64, f64)> {
        if node == 0 {
            return Ok((self.u0.interpolate(y), 0.0));
        }
        let back = characteristic(&Reversed { inner: a, from: node }, y, settings, false)?;
        Ok((self.u0.interpolate(back.path.point(node)), back.scheme_error))
    }
}

fn field_increment<A: AveragedDrift + ?Sized>(a: &A, s: usize, t: usize, x: &[f64]) -> [f64; 2] {
    let hi = a.value(t, x);
    let lo = a.value(s, x);
    [hi[0] - lo[0], hi[1] - lo[1]]
}

pub fn solve_transport<A: AveragedDrift + ?Sized>(
    a: &A,
    u0: &ScalarField,
    atlas: &FlowAtlas,
) -> Result<TransportSolution> {
    let nodes = atlas.options.psi_nodes.clone();
    if nodes.is_empty() {
        return Err(Error::Missing("the flow atlas carries no inverse flow".into()));
    }
    let grid = atlas.x0grid;
    let d = grid.dim();
    if u0.grid.dim() != d || a.dim() != d {
        return Err(invalid("initial datum, field and atlas dimensions differ"));
    }
    let u: Vec<ScalarField> = (0..nodes.len())
        .map(|i| {
            let values = (0..grid.size()).map(|p| u0.interpolate(&atlas.psi(i, p)[..d])).collect();
            ScalarField { grid, values }
        })
        .collect();

    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let m = grid.points();
    let inside = |i: usize| i >= 2 && i + 2 < m;
    let interior = |p: usize| if d == 1 { inside(p) } else { inside(p % m) && inside(p / m) };
    for i in 1..nodes.len() {
        let (s, t) = (nodes[i - 1], nodes[i]);
        if t <= s {
            continue;
        }
        let grads: Vec<ScalarField> = (0..d).map(|axis| u[i - 1].derivative(axis)).collect();
        for p in (0..grid.size()).filter(|p| interior(*p)) {
            let x = grid.point(p);
            let inc = field_increment(a, s, t, &x[..d]);
            let du = u[i].values[p] - u[i - 1].values[p];
            let adv: f64 = (0..d).map(|c| inc[c] * grads[c].values[p]).sum();
            worst = worst.max(fabs(du + adv));
            scale = scale.max(fabs(du));
        }
    }
    let increment_residual = if scale > 0.0 { worst / scale } else { 0.0 };
    Ok(TransportSolution { grid, nodes, u, u0: u0.clone(), increment_residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstancyReport {
    /// `max |u(t, Φ_t(x)) − u_0(x)|` over probe points and stored times.
    pub max_deviation: f64,
    /// Scheme error of the characteristics times `max(1, Lip u_0)`.
    pub tolerance: f64,
}

/// Checks `u(t, Φ_t(x)) = u_0(x)` on the nodes of `probe`: forward
/// characteristics give `Φ_t(x)`, and `u(t, ·)` is evaluated there through
/// backward characteristics.
pub fn characteristic_constancy<A: AveragedDrift + ?Sized>(
    a: &A,
    sol: &TransportSolution,
    probe: &SpaceGrid,
    settings: &SolverSettings,
) -> Result<ConstancyReport> {
    let d = a.dim();
    let lip = (0..d).map(|axis| sol.u0.derivative(axis).sup_norm()).fold(1.0, f64::max);
    let mut max_deviation: f64 = 0.0;
    let mut scheme: f64 = settings.tol;
    for p in 0..probe.size() {
        let x = probe.point(p);
        let forward = characteristic(a, &x[..d], settings, false)?;
        scheme = scheme.max(forward.scheme_error);
        let target = sol.u0.interpolate(&x[..d]);
        for &node in sol.nodes.iter().filter(|n| **n > 0) {
            let (value, err) = sol.value_at(a, settings, node, forward.path.point(node))?;
            scheme = scheme.max(err);
            max_deviation = max_deviation.max(fabs(value - target));
        }
    }
    Ok(ConstancyReport { max_deviation, tolerance: scheme * lip })
}

// ---------------------------------------------------------------------------
// Test functions

/// Tensor-product bump `φ(x) = Π_a β((x_a − c_a)/r)`, `β(y) = exp(−1/(1−y²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Probe {
    fn factor(&self, y: f64) -> (f64, f64) {
        let v = bump(y * y);
        if v == 0.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - y * y;
        (v, v * (-2.0 * y / (q * q)) / self.radius)
    }

    /// `(φ(x), ∇φ(x))`.
    pub fn eval(&self, x: &[f64]) -> (f64, [f64; 2]) {
        let d = x.len();
        let mut f = [(1.0, 0.0); 2];
        for a in 0..d {
            f[a] = self.factor((x[a] - self.center[a]) / self.radius);
        }
        let value = f[0].0 * f[1].0;
        let grad = if d == 1 { [f[0].1, 0.0] } else { [f[0].1 * f[1].0, f[0].0 * f[1].1] };
        (value, grad)
    }
}

/// Eight bumps with centres spread over `[-c, c]^d` and radius `r`.
pub fn probe_family(dim: usize, spread: f64, radius: f64) -> Vec<Probe> {
    let frac = [-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 0.125];
    (0..8)
        .map(|j| {
            let cx = frac[j] * spread;
            let cy = if dim == 1 { 0.0 } else { frac[(j * 3 + 1) % 8] * spread };
            Probe { center: [cx, cy], radius }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Weak residual

/// Time exponent of `A` measured on the grid: slope of
/// `mean_s sup_x |A_{s,s+ℓ}(x)|` against the lag `ℓ` over dyadic lags.
pub fn measure_time_exponent<A: AveragedDrift + ?Sized>(a: &A, grid: &SpaceGrid) -> Result<f64> {
    let n = a.tgrid().intervals();
    let dt = a.tgrid().step();
    let d = a.dim();
    let stride = (grid.size() / 64).max(1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1;
    while lag <= n / 8 {
        let mut acc = 0.0;
        let mut count = 0;
        let mut s = 0;
        while s + lag <= n {
            let mut sup: f64 = 0.0;
            for p in (0..grid.size()).step_by(stride) {
                let x = grid.point(p);
                let inc = field_increment(a, s, s + lag, &x[..d]);
                sup = sup.max(sqrt(inc[0] * inc[0] + inc[1] * inc[1]));
            }
            acc += sup;
            count += 1;
            s += lag.max(n / 64);
        }
        let mean = acc / count as f64;
        if mean > 0.0 {
            xs.push(log(lag as f64 * dt));
            ys.push(log(mean));
        }
        lag *= 2;
    }
    if xs.len() < 3 {
        return Err(Error::TooFewScales { got: xs.len(), needed: 3 });
    }
    Ok(linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakResidualReport {
    pub gamma: f64,
    /// `(t − s, max ratio)` per dyadic level, coarse to fine.
    pub levels: Vec<(f64, f64)>,
    pub max_ratio: f64,
    /// Max over min of the per-level ratios.
    pub variation: f64,
    /// Finest-level ratio over coarsest-level ratio.
    pub growth: f64,
}

/// `|⟨u_{s,t}, φ⟩ − ⟨u_s, div(A_{s,t} φ)⟩| / |t−s|^{2γ}` over dyadic pairs of
/// the stored times, for every probe. The stored nodes must be equally
/// spaced with a power-of-two count of intervals; `levels` dyadic lags are
/// swept starting from half the horizon. `gamma = None` uses the measured
/// time exponent of `A` (capped at 1) minus [`GAMMA_MARGIN`].
pub fn transport_weak_residual<A: AveragedDrift + ?Sized>(
    sol: &TransportSolution,
    a: &A,
    probes: &[Probe],
    gamma: Option<f64>,
    levels: usize,
) -> Result<WeakResidualReport> {
    let nodes = &sol.nodes;
    let count = nodes.len() - 1;
    if count == 0 || !count.is_power_of_two() {
        return Err(invalid("stored times must form a dyadic sequence"));
    }
    let step = nodes[1] - nodes[0];
    if nodes.windows(2).any(|w| w[1] - w[0] != step) {
        return Err(invalid("stored times must be equally spaced"));
    }
    if levels == 0 || (1usize << (levels - 1)) > count / 2 {
        return Err(invalid("not enough stored times for the requested levels"));
    }
    let grid = sol.grid;
    let d = grid.dim();
    let gamma = match gamma {
        Some(g) => g,
        None => measure_time_exponent(a, &grid)?.min(1.0) - GAMMA_MARGIN,
    };
    let vol = grid.cell_volume();
    let tg = a.tgrid();
    // Probe values on the grid.
    let probe_vals: Vec<Vec<(usize, f64, [f64; 2])>> = probes
        .iter()
        .map(|pr| {
            (0..grid.size())
                .filter_map(|p| {
                    let x = grid.point(p);
                    let (v, g) = pr.eval(&x[..d]);
                    (v != 0.0 || g != [0.0, 0.0]).then_some((p, v, g))
                })
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(levels);
    let mut lag = count / 2;
    for _ in 0..levels {
        let mut best: f64 = 0.0;
        let mut i = 0;
        while i + lag <= count {
            let (s, t) = (nodes[i], nodes[i + lag]);
            let h = pow(tg.node(t) - tg.node(s), 2.0 * gamma);
            for pv in &probe_vals {
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                for &(p, v, g) in pv {
                    let x = grid.point(p);
                    let hi = a.jet(t, &x[..d], 1);
                    let lo = a.jet(s, &x[..d], 1);
                    let mut div_a = 0.0;
                    let mut adv = 0.0;
                    for c in 0..d {
                        div_a += hi.grad[c][c] - lo.grad[c][c];
                        adv += (hi.value[c] - lo.value[c]) * g[c];
                    }
                    lhs += (sol.u[i + lag].values[p] - sol.u[i].values[p]) * v;
                    rhs += sol.u[i].values[p] * (div_a * v + adv);
                }
                best = best.max(fabs(lhs - rhs) * vol / h);
            }
            i += lag;
        }
        out.push((tg.node(nodes[lag]) - tg.node(nodes[0]), best));
        lag /= 2;
    }
    let max_ratio = out.iter().map(|l| l.1).fold(0.0, f64::max);
    let min_ratio = out.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
    let variation = if min_ratio > 0.0 { max_ratio / min_ratio } else { f64::INFINITY };
    let growth = if out[0].1 > 0.0 { out[out.len() - 1].1 / out[0].1 } else { f64::INFINITY };
    Ok(WeakResidualReport { gamma, levels: out, max_ratio, variation, growth })
}

// ---------------------------------------------------------------------------
// Continuity equation

/// Weighted particles; `density` optionally carries the density of an
/// absolutely continuous measure at each particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleMeasure {
    pub dim: usize,
    pub positions: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub density: Option<Vec<f64>>,
}

impl ParticleMeasure {
    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Quadrature discretisation of `ρ_0 dx` on the nodes of `grid`.
    pub fn from_density(grid: &SpaceGrid, rho: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let vol = grid.cell_volume();
        let positions: Vec<[f64; 2]> = (0..grid.size()).map(|p| grid.point(p)).collect();
        let density: Vec<f64> = positions.iter().map(|x| rho(&x[..d])).collect();
        let weights = density.iter().map(|r| r * vol).collect();
        Self { dim: d, positions, weights, density: Some(density) }
    }

    /// `⟨v, φ⟩ = Σ_i w_i φ(x_i)`.
    pub fn pair(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        self.positions.iter().zip(&self.weights).map(|(x, w)| w * phi(&x[..self.dim])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuitySolution {
    pub nodes: Vec<usize>,
    pub measures: Vec<ParticleMeasure>,
    pub scheme_error: f64,
}

/// Pushes particles along `Φ_t`; weights are unchanged, densities follow
/// `ρ_t(Φ_t(x)) = ρ_0(x) exp(−∫_0^t div A(ds, Φ_s(x)))`.
pub fn solve_continuity<A: AveragedDrift + ?Sized>(
    a: &A,
    v0: &ParticleMeasure,
    nodes: &[usize],
    settings: &SolverSettings,
) -> Result<ContinuitySolution> {
    let d = a.dim();
    if v0.dim != d {
        return Err(invalid("particle dimension differs from the field"));
    }
    if v0.weights.iter().any(|w| !w.is_finite()) {
        return Err(invalid("particle weights must be finite"));
    }
    let n = a.tgrid().intervals();
    if nodes.iter().any(|k| *k > n) {
        return Err(invalid("output node beyond the grid"));
    }
    let with_density = v0.density.is_some();
    let mut measures: Vec<ParticleMeasure> = nodes
        .iter()
        .map(|_| ParticleMeasure {
            dim: d,
            positions: Vec::with_capacity(v0.count()),
            weights: v0.weights.clone(),
            density: with_density.then(|| Vec::with_capacity(v0.count())),
        })
        .collect();
    let mut scheme_error: f64 = 0.0;
    for (i, x) in v0.positions.iter().enumerate() {
        let ch = characteristic(a, &x[..d], settings, with_density)?;
        scheme_error = scheme_error.max(ch.scheme_error);
        for (m, &k) in measures.iter_mut().zip(nodes) {
            let mut pos = [0.0; 2];
            pos[..d].copy_from_slice(ch.path.point(k));
            m.positions.push(pos);
            if let (Some(dens), Some(rho0)) = (m.density.as_mut(), v0.density.as_ref()) {
                dens.push(rho0[i] * exp(-ch.divergence[k]));
            }
        }
    }
    Ok(ContinuitySolution { nodes: nodes.to_vec(), measures, scheme_error })
}

/// `ρ_t(y) = ρ_0(ψ_t(y)) exp(−∫_0^t div A(ds, ψ(s, t, y)))` by one backward
/// characteristic (the reversed chain accumulates the negative integral).
pub fn density_at<A: AveragedDrift + ?Sized>(
    a: &A,
    rho0: impl Fn(&[f64]) -> f64,
    node: usize,
    y: &[f64],
    settings: &SolverSettings,
) -> Result<f64> {
    if node == 0 {
        return Ok(rho0(y));
    }
    let back = characteristic(&Reversed { inner: a, from: node }, y, settings, true)?;
    Ok(rho0(back.path.point(node)) * exp(back.divergence[node]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    /// `⟨v_t, φ⟩` from the pushed particles.
    pub particles: f64,
    /// `∫ φ(Φ_t(x)) dv_0` recomputed from the same particles.
    pub pushforward: f64,
    /// `∫ φ ρ_t dy` by quadrature of the Jacobian-form density on `grid`.
    pub density: f64,
    pub deviation: f64,
}

/// Pairs the pushed measure at `sol.nodes[i]` with `φ` three ways.
pub fn duality_check<A: AveragedDrift + ?Sized>(
    a: &A,
    v0: &ParticleMeasure,
    sol: &ContinuitySolution,
    i: usize,
    rho0: impl Fn(&[f64]) -> f64,
    phi: impl Fn(&[f64]) -> f64,
    grid: &SpaceGrid,
    settings: &SolverSettings,
) -> Result<DualityReport> {
    let d = v0.dim;
    let node = sol.nodes[i];
    let particles = sol.measures[i].pair(&phi);
    let pushforward: f64 = v0.weights.iter().zip(&sol.measures[i].positions).map(|(w, y)| w * phi(&y[..d])).sum();
    let mut density = 0.0;
    for p in 0..grid.size() {
        let y = grid.point(p);
        let f = phi(&y[..d]);
        if f != 0.0 {
            density += f * density_at(a, &rho0, node, &y[..d], settings)?;
        }
    }
    density *= grid.cell_volume();
    let deviation = fabs(particles - density);
    Ok(DualityReport { particles, pushforward, density, deviation })
}

// ---------------------------------------------------------------------------
// Commutator

fn check_components(h: &ScalarField, g: &[ScalarField]) -> Result<()> {
    if g.len() != h.grid.dim() || g.iter().any(|c| c.grid != h.grid) {
        return Err(invalid("g needs one component per dimension on the grid of h"));
    }
    Ok(())
}

/// `R^ε(h, g) = ρ^ε * (g·∇h) − g·∇(ρ^ε * h)` with central-difference
/// gradients.
pub fn commutator(h: &ScalarField, g: &[ScalarField], eps: f64) -> Result<ScalarField> {
    check_components(h, g)?;
    let grid = h.grid;
    let moll = Mollifier::new(&grid, eps)?;
    let mut advect = vec![0.0; grid.size()];
    for (axis, gc) in g.iter().enumerate() {
        let dh = h.derivative(axis);
        for (o, (gv, dv)) in advect.iter_mut().zip(gc.values.iter().zip(&dh.values)) {
            *o += gv * dv;
        }
    }
    let mut out = moll.apply(&grid, &advect);
    let smooth = ScalarField { grid, values: moll.apply(&grid, &h.values) };
    for (axis, gc) in g.iter().enumerate() {
        let ds = smooth.derivative(axis);
        for (o, (gv, dv)) in out.iter_mut().zip(gc.values.iter().zip(&ds.values)) {
            *o -= gv * dv;
        }
    }
    Ok(ScalarField { grid, values: out })
}

fn in_ball(grid: &SpaceGrid, p: usize, radius: f64) -> bool {
    let x = grid.point(p);
    (0..grid.dim()).all(|a| fabs(x[a]) <= radius)
}

fn sup_on(f: &ScalarField, radius: f64) -> f64 {
    (0..f.grid.size()).filter(|p| in_ball(&f.grid, *p, radius)).map(|p| fabs(f.values[p])).fold(0.0, f64::max)
}

/// `‖R^ε(h, g)‖_{C⁰_R} / (‖h‖_{C⁰_{R+1}} ‖g‖_{C¹_{R+1}})`, balls taken in
/// the sup norm.
pub fn commutator_bound_ratio(h: &ScalarField, g: &[ScalarField], eps: f64, radius: f64) -> Result<f64> {
    let r = commutator(h, g, eps)?;
    let hn = sup_on(h, radius + 1.0);
    let mut gn: f64 = 0.0;
    let mut dgn: f64 = 0.0;
    for c in g {
        gn = gn.max(sup_on(c, radius + 1.0));
        for axis in 0..h.grid.dim() {
            dgn = dgn.max(sup_on(&c.derivative(axis), radius + 1.0));
        }
    }
    let denom = hn * (gn + dgn);
    Ok(if denom > 0.0 { sup_on(&r, radius) / denom } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingReport {
    pub eps: Vec<f64>,
    pub sups: Vec<f64>,
    /// Each value at most [`MONOTONE_SLACK`] times the previous one.
    pub monotone: bool,
    /// Last over first (0 when all values vanish).
    pub final_ratio: f64,
    /// Log-log slope of the sup against `ε`.
    pub slope: f64,
}

/// The default sweep `ε = 2^{-3} L, …, 2^{-7} L`.
pub fn default_eps_sweep(grid: &SpaceGrid) -> Vec<f64> {
    (3..=7).map(|k| grid.half_width() / f64::from(1u32 << k)).collect()
}

/// `sup_{B_R} |R^ε(h, g)|` over a decreasing `ε` sweep.
pub fn commutator_vanishing_check(
    h: &ScalarField,
    g: &[ScalarField],
    eps: &[f64],
    radius: f64,
) -> Result<VanishingReport> {
    let sups = eps.iter().map(|e| commutator(h, g, *e).map(|r| sup_on(&r, radius))).collect::<Result<Vec<_>>>()?;
    let monotone = sups.windows(2).all(|w| w[1] <= MONOTONE_SLACK * w[0]);
    let final_ratio = if sups[0] > 0.0 { sups[sups.len() - 1] / sups[0] } else { 0.0 };
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        eps.iter().zip(&sups).filter(|(_, s)| **s > 0.0).map(|(e, s)| (log(*e), log(*s))).unzip();
    let slope = if xs.len() >= 2 { linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN) } else { f64::NAN };
    Ok(VanishingReport { eps: eps.to_vec(), sups, monotone, final_ratio, slope })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GermScalingReport {
    /// Fitted exponent of `max |δΓ_{s,u,t}|` against `|t−s|`, per `ε`.
    pub exponents: Vec<f64>,
    pub min_exponent: f64,
    pub gamma: f64,
}

/// Scaling of the coherence defect of `Γ_{s,t} = R^ε(u_s, A_{s,t})(Φ_s(x))`
/// along the characteristic from grid node `p`, over dyadic triples of the
/// stored transport times. By bilinearity
/// `δΓ_{s,u,t} = R^ε(u_s, A_{u,t})(Φ_s(x)) − R^ε(u_u, A_{u,t})(Φ_u(x))`.
pub fn commutator_germ_scaling<A: AveragedDrift + ?Sized>(
    a: &A,
    sol: &TransportSolution,
    atlas: &FlowAtlas,
    eps: &[f64],
    p: usize,
    gamma: f64,
) -> Result<GermScalingReport> {
    let grid = sol.grid;
    let d = grid.dim();
    let stride = atlas.options.out_stride;
    if sol.nodes.iter().any(|k| k % stride != 0) {
        return Err(invalid("transport times must be stored atlas times"));
    }
    let count = sol.nodes.len() - 1;
    if count < 8 || !count.is_power_of_two() {
        return Err(invalid("need a dyadic sequence of at least 8 stored times"));
    }
    let tg = a.tgrid();
    let render = |s: usize, t: usize| -> Vec<ScalarField> {
        let mut comps = vec![ScalarField::zeros(grid); d];
        for q in 0..grid.size() {
            let x = grid.point(q);
            let inc = field_increment(a, s, t, &x[..d]);
            for c in 0..d {
                comps[c].values[q] = inc[c];
            }
        }
        comps
    };
    let mut exponents = Vec::with_capacity(eps.len());
    for &e in eps {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut lag = count / 2;
        while lag >= 2 {
            let mut best: f64 = 0.0;
            let mut i = 0;
            while i + lag <= count {
                let mid = i + lag / 2;
                let (s, u, t) = (sol.nodes[i], sol.nodes[mid], sol.nodes[i + lag]);
                let g = render(u, t);
                let r_s = commutator(&sol.u[i], &g, e)?;
                let r_u = commutator(&sol.u[mid], &g, e)?;
                let xs_ = atlas.phi(s / stride, p);
                let xu_ = atlas.phi(u / stride, p);
                let delta = r_s.interpolate(&xs_[..d]) - r_u.interpolate(&xu_[..d]);
                best = best.max(fabs(delta));
                i += lag;
            }
            if best > 0.0 {
                xs.push(log(tg.node(sol.nodes[lag]) - tg.node(sol.nodes[0])));
                ys.push(log(best));
            }
            lag /= 2;
        }
        let slope =
            if xs.len() >= 2 { linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN) } else { f64::INFINITY };
        exponents.push(slope);
    }
    let min_exponent = exponents.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(GermScalingReport { exponents, min_exponent, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(m: usize) -> SpaceGrid {
        SpaceGrid::new(core::f64::consts::PI, m, 1).unwrap()
    }

    #[test]
    fn commutator_vanishes_for_constant_g_or_h() {
        let g = grid1(256);
        let h = ScalarField::from_fn(g, |x| libm::sin(x[0]) + 0.3 * libm::cos(3.0 * x[0]));
        let gc = [ScalarField::from_fn(g, |_| 0.7)];
        let r = commutator(&h, &gc, 0.2).unwrap();
        assert!(sup_on(&r, 2.0) < 1e-8);
        let hc = ScalarField::from_fn(g, |_| 1.5);
        let gv = [ScalarField::from_fn(g, |x| libm::sin(2.0 * x[0]))];
        let r = commutator(&hc, &gv, 0.2).unwrap();
        assert!(sup_on(&r, 2.0) < 1e-8);
    }

    #[test]
    fn commutator_under_resolved() {
        let g = grid1(64);
        let h = ScalarField::zeros(g);
        assert!(matches!(commutator(&h, core::slice::from_ref(&h), 1e-3), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn probe_gradient_matches_difference_quotient() {
        let pr = Probe { center: [0.1, -0.2], radius: 0.7 };
        let x = [0.3, 0.05];
        let (_, g) = pr.eval(&x);
        let h = 1e-6;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (pr.eval(&xp).0 - pr.eval(&xm).0) / (2.0 * h);
            assert!((fd - g[a]).abs() < 1e-6);
        }
    }

    #[test]
    fn particle_mass_is_weight_sum() {
        let g = grid1(16);
        let v = ParticleMeasure::from_density(&g, |x| libm::exp(-x[0] * x[0]));
        assert!((v.mass() - v.pair(|_| 1.0)).abs() < 1e-15);
    }
}
