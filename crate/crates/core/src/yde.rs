//! Young differential equations `θ_t = θ_0 + ∫_0^t A(ds, θ_s)` driven by an
//! averaged field `A = T^w b`, their flows and variations.
//!
//! The default solver steps the first-order germ, `θ_{k+1} = θ_k +
//! A_{t_k,t_{k+1}}(θ_k)`, on the field's grid and on its two dyadic
//! coarsenings. The three chains give a refinement ratio (the convergence
//! check) and a sewing-style extrapolation `F + r/(1-r)(F − C)` with
//! `r = 2^{1-β}`, `β = min(γ(1+ν), 2)`. Picard iteration of the sewn
//! nonlinear Young integral is the cross-check.
//!
//! Variations are carried along each trajectory in the same chain: `DΦ`
//! solves the linear equation driven by `V_t = ∫_0^t ∇A(dr, Φ_r)`, `D²Φ`
//! the same equation with the forcing `D²A[DΦ, DΦ]`, and the divergence
//! integral for the Jacobian identity is accumulated alongside.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::averaging::{AveragedDrift, Jet};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{sample_fbm_exact, PathKind, SamplePath};
use crate::gridcore::{SpaceGrid, TimeGrid};
use crate::math::{exp, fabs, log, pow, sqrt};
use crate::young::{sew, NonlinearGerm, YoungExponents, MAX_CONTRACTION};

/// Starting offset of the two Peano runs.
pub const PEANO_START: f64 = 1e-12;
/// Sup-norm distance under which two Peano runs count as the same trajectory.
pub const PEANO_COINCIDENCE: f64 = 1e-3;
/// Picard iterations before giving up.
pub const MAX_PICARD_ITERATIONS: usize = 500;

// ---------------------------------------------------------------------------
// Field wrappers

fn jet_diff(hi: &Jet, lo: &Jet) -> Jet {
    let mut out = Jet::default();
    for c in 0..2 {
        out.value[c] = hi.value[c] - lo.value[c];
        for a in 0..2 {
            out.grad[c][a] = hi.grad[c][a] - lo.grad[c][a];
            for b in 0..2 {
                out.hess[c][a][b] = hi.hess[c][a][b] - lo.hess[c][a][b];
            }
        }
    }
    out
}

/// Field of the time-reversed equation started at node `from`. With
/// `b̃_r = b_{t_from − r}` and `w̃_r = w_{t_from − r}`, `θ̃_r = θ_{t_from − r}`
/// solves `θ̃_r = θ̃_0 − ∫_0^r T^{w̃}b̃(ds, θ̃_s)`, so the field is
/// `Ã(r, x) = −T^{w̃}b̃(r, x) = A(t_from − r, x) − A(t_from, x)`.
///
/// The time-constant part `A(t_from, x)` is dropped from [`jet`]; solvers only
/// see increments.
///
/// [`jet`]: AveragedDrift::jet
pub struct Reversed<'a, A: ?Sized> {
    pub inner: &'a A,
    pub from: usize,
}

impl<A: AveragedDrift + ?Sized> AveragedDrift for Reversed<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn tgrid(&self) -> TimeGrid {
        let g = self.inner.tgrid();
        TimeGrid::new(g.t0(), g.node(self.from), self.from).expect("from ≥ 1")
    }
    fn jet(&self, k: usize, x: &[f64], order: usize) -> Jet {
        self.inner.jet(self.from - k, x, order)
    }
}

/// Field of the equation restarted at node `offset`:
/// `Â(r, x) = A(t_offset + r, x) − A(t_offset, x)` (constant part dropped).
pub struct Translated<'a, A: ?Sized> {
    pub inner: &'a A,
    pub offset: usize,
}

impl<A: AveragedDrift + ?Sized> AveragedDrift for Translated<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn tgrid(&self) -> TimeGrid {
        let g = self.inner.tgrid();
        TimeGrid::new(g.node(self.offset), g.t1(), g.intervals() - self.offset).expect("offset < n")
    }
    fn jet(&self, k: usize, x: &[f64], order: usize) -> Jet {
        self.inner.jet(self.offset + k, x, order)
    }
}

/// `A1 − A2` on a common grid.
pub struct Difference<'a, A: ?Sized, B: ?Sized> {
    pub left: &'a A,
    pub right: &'a B,
}

impl<A: AveragedDrift + ?Sized, B: AveragedDrift + ?Sized> AveragedDrift for Difference<'_, A, B> {
    fn dim(&self) -> usize {
        self.left.dim()
    }
    fn tgrid(&self) -> TimeGrid {
        self.left.tgrid()
    }
    fn jet(&self, k: usize, x: &[f64], order: usize) -> Jet {
        jet_diff(&self.left.jet(k, x, order), &self.right.jet(k, x, order))
    }
}

/// `w̃_k = w_{n−k}` on the same grid. Applying it twice is the identity.
pub fn reverse_path(p: &SamplePath) -> SamplePath {
    let d = p.dim;
    let n = p.tgrid.intervals();
    let mut values = vec![0.0; p.values.len()];
    for k in 0..=n {
        values[k * d..(k + 1) * d].copy_from_slice(p.point(n - k));
    }
    SamplePath { tgrid: p.tgrid, dim: d, values, seed: p.seed, kind: p.kind }
}

// ---------------------------------------------------------------------------
// Chain state

// Layout: position, DΦ (2x2), D²Φ (2x2x2), ∫div A, V = ∫∇A (2x2).
const J0: usize = 2;
const H0: usize = 6;
const DIV: usize = 14;
const V0: usize = 15;
const STATE: usize = 19;

type State = [f64; STATE];

fn initial_state(x0: &[f64]) -> State {
    let mut s = [0.0; STATE];
    s[..x0.len()].copy_from_slice(x0);
    s[J0] = 1.0;
    s[J0 + 3] = 1.0;
    s
}

fn step<A: AveragedDrift + ?Sized>(a: &A, from: usize, to: usize, s: &State, d: usize, order: usize) -> State {
    let x = &s[..d];
    let inc = jet_diff(&a.jet(to, x, order), &a.jet(from, x, order));
    let mut out = *s;
    for c in 0..d {
        out[c] += inc.value[c];
    }
    if order >= 1 {
        let g = &inc.grad;
        for c in 0..d {
            for b in 0..d {
                let mut acc = 0.0;
                for e in 0..d {
                    acc += g[c][e] * s[J0 + e * 2 + b];
                }
                out[J0 + c * 2 + b] += acc;
                out[V0 + c * 2 + b] += g[c][b];
            }
            out[DIV] += g[c][c];
        }
    }
    if order >= 2 {
        let g = &inc.grad;
        let q = &inc.hess;
        for c in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for e in 0..d {
                        acc += g[c][e] * s[H0 + e * 4 + i * 2 + j];
                        for f in 0..d {
                            acc += q[c][e][f] * s[J0 + e * 2 + i] * s[J0 + f * 2 + j];
                        }
                    }
                    out[H0 + c * 4 + i * 2 + j] += acc;
                }
            }
        }
    }
    out
}

fn check_window(s: &State, d: usize, window: f64, t: f64) -> Result<()> {
    for c in 0..d {
        if !s[c].is_finite() || fabs(s[c]) >= window {
            return Err(Error::Localisation(format!(
                "trajectory left the window |x| < {window} at t = {t:.6} (x = {:.4e})",
                s[c]
            )));
        }
    }
    Ok(())
}

/// Euler chain from node 0 with the given stride; returns the states at
/// nodes `0, stride, 2·stride, …, n`.
fn chain<A: AveragedDrift + ?Sized>(a: &A, x0: &[f64], stride: usize, order: usize, window: f64) -> Result<Vec<State>> {
    let g = a.tgrid();
    let n = g.intervals();
    let d = a.dim();
    let mut out = Vec::with_capacity(n / stride + 1);
    let mut s = initial_state(x0);
    check_window(&s, d, window, g.node(0))?;
    out.push(s);
    let mut k = 0;
    while k + stride <= n {
        s = step(a, k, k + stride, &s, d, order);
        check_window(&s, d, window, g.node(k + stride))?;
        out.push(s);
        k += stride;
    }
    Ok(out)
}

fn position_distance(a: &State, b: &State, d: usize) -> f64 {
    sqrt((0..d).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum())
}

/// Scheme settings shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub scheme: YdeScheme,
    /// Picard stopping threshold on the sup-norm change; also the floor of
    /// the reported scheme tolerance.
    pub tol: f64,
    /// Declared `(γ, ν)` of the field: `A ∈ C^γ_t C^ν_x`.
    pub exponents: (f64, f64),
    /// Trajectories must stay in `|x_c| < window`.
    pub window: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { scheme: YdeScheme::EulerSewing, tol: 1e-10, exponents: (1.0, 1.0), window: f64::INFINITY }
    }
}

impl SolverSettings {
    fn check(&self) -> Result<()> {
        let (g, nu) = self.exponents;
        if !(g > 0.0 && g <= 1.0 && nu > 0.0 && nu <= 1.0) {
            return Err(invalid("field exponents must lie in (0, 1]"));
        }
        if !(g * (1.0 + nu) > 1.0) {
            return Err(Error::YoungCondition(format!("γ(1+ν) = {:.4} ≤ 1", g * (1.0 + nu))));
        }
        if !(self.tol > 0.0) || !(self.window > 0.0) {
            return Err(invalid("tolerance and window must be positive"));
        }
        Ok(())
    }

    /// `β = min(γ(1+ν), 2)`; the Euler chain is at best first order.
    fn beta(&self) -> f64 {
        (self.exponents.0 * (1.0 + self.exponents.1)).min(2.0)
    }

    fn tail_factor(&self) -> f64 {
        let r = pow(2.0, 1.0 - self.beta());
        r / (1.0 - r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YdeScheme {
    /// First-order germ stepping with dyadic refinement check and
    /// extrapolation.
    #[default]
    EulerSewing,
    /// First-order germ stepping on the finest grid only (still checked).
    Euler,
    /// Fixed-point iteration of the sewn nonlinear Young integral.
    Picard,
}

struct EulerRun {
    states: Vec<State>,
    /// Size of the extrapolation correction, `r/(1-r) sup |F − C|`.
    scheme_error: f64,
    refinement_ratio: Option<f64>,
}

fn euler_run<A: AveragedDrift + ?Sized>(a: &A, x0: &[f64], s: &SolverSettings, order: usize) -> Result<EulerRun> {
    let n = a.tgrid().intervals();
    if n % 4 != 0 {
        return Err(invalid("the time grid must have a multiple of 4 intervals"));
    }
    if x0.len() != a.dim() {
        return Err(invalid("initial value dimension differs from the field"));
    }
    let d = a.dim();
    let fine = chain(a, x0, 1, order, s.window)?;
    let coarse = chain(a, x0, 2, order, s.window)?;
    let coarsest = chain(a, x0, 4, order, s.window)?;
    let d_fc = (0..coarse.len()).map(|i| position_distance(&fine[2 * i], &coarse[i], d)).fold(0.0, f64::max);
    let d_cc = (0..coarsest.len()).map(|i| position_distance(&coarse[2 * i], &coarsest[i], d)).fold(0.0, f64::max);
    let scale = fine.iter().map(|st| position_distance(st, &[0.0; STATE], d)).fold(0.0, f64::max).max(1e-300);
    let refinement_ratio = if d_fc > 1e-13 * scale && d_cc > 1e-13 * scale { Some(d_fc / d_cc) } else { None };
    if let Some(r) = refinement_ratio {
        if r >= MAX_CONTRACTION {
            return Err(Error::NoYoungSolution(format!("dyadic refinement ratio {r:.3} ≥ {MAX_CONTRACTION}")));
        }
    }
    let f = s.tail_factor();
    let scheme_error = f * d_fc;
    if s.scheme == YdeScheme::Euler {
        return Ok(EulerRun { states: fine, scheme_error, refinement_ratio });
    }
    // F + f(F − C) at even nodes; the correction is averaged at odd nodes.
    let mut states = fine.clone();
    for (k, st) in states.iter_mut().enumerate() {
        for (i, v) in st.iter_mut().enumerate() {
            let corr = if k % 2 == 0 {
                fine[k][i] - coarse[k / 2][i]
            } else {
                0.5 * ((fine[k - 1][i] - coarse[(k - 1) / 2][i]) + (fine[k + 1][i] - coarse[(k + 1) / 2][i]))
            };
            *v += f * corr;
        }
    }
    Ok(EulerRun { states, scheme_error, refinement_ratio })
}

fn states_to_path(states: &[State], tgrid: TimeGrid, d: usize) -> Result<SamplePath> {
    let values = states.iter().flat_map(|s| s[..d].iter().copied()).collect();
    SamplePath::new(tgrid, d, values, 0, PathKind::Generic)
}

// ---------------------------------------------------------------------------
// Norms

/// Hölder seminorm over dyadic lags (all start nodes).
fn dyadic_holder(values: &[f64], d: usize, dt: f64, gamma: f64) -> f64 {
    let n = values.len() / d - 1;
    let mut best: f64 = 0.0;
    let mut lag = 1;
    while lag <= n {
        let h = pow(lag as f64 * dt, gamma);
        for a in 0..=n - lag {
            let b = a + lag;
            let mut d2 = 0.0;
            for c in 0..d {
                let x = values[b * d + c] - values[a * d + c];
                d2 += x * x;
            }
            best = best.max(sqrt(d2) / h);
        }
        lag *= 2;
    }
    best
}

/// `max(‖p‖_{C⁰}, ⟦p⟧_γ)`: an equivalent form of the `C^γ` norm.
pub fn holder_norm(p: &SamplePath, gamma: f64) -> f64 {
    let sup = p.sup_norm();
    sup.max(dyadic_holder(&p.values, p.dim, p.tgrid.step(), gamma))
}

/// `‖A‖_{C^γ_t C^ν_x}` measured on the tube around `path`: over dyadic pairs
/// `s < t`, the sup and `ν`-Hölder seminorm of `A_{s,t}` near `θ_s`, divided
/// by `|t−s|^γ`. For `ν = 1` the seminorm is the gradient.
pub fn field_norm_on_path<A: AveragedDrift + ?Sized>(a: &A, path: &SamplePath, gamma: f64, nu: f64) -> f64 {
    let n = path.tgrid.intervals();
    let d = path.dim;
    let dt = path.tgrid.step();
    let offsets = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125];
    let mut best: f64 = 0.0;
    let mut lag = 1;
    while lag <= n {
        let h = pow(lag as f64 * dt, gamma);
        let mut s = 0;
        while s + lag <= n {
            let t = s + lag;
            let x = path.point(s);
            let order = if nu >= 1.0 { 1 } else { 0 };
            let inc = jet_diff(&a.jet(t, x, order), &a.jet(s, x, order));
            let sup = sqrt((0..d).map(|c| inc.value[c] * inc.value[c]).sum());
            let mut semi: f64 = 0.0;
            if nu >= 1.0 {
                let mut g2 = 0.0;
                for c in 0..d {
                    for e in 0..d {
                        g2 += inc.grad[c][e] * inc.grad[c][e];
                    }
                }
                semi = sqrt(g2);
            } else {
                let mut y = [0.0; 2];
                for axis in 0..d {
                    for &o in &offsets {
                        for sign in [-1.0, 1.0] {
                            y[..d].copy_from_slice(x);
                            y[axis] += sign * o;
                            let iy = jet_diff(&a.jet(t, &y[..d], 0), &a.jet(s, &y[..d], 0));
                            let diff = sqrt((0..d).map(|c| (iy.value[c] - inc.value[c]).powi(2)).sum());
                            semi = semi.max(diff / pow(o, nu));
                        }
                    }
                }
            }
            best = best.max((sup + semi) / h);
            s += lag;
        }
        lag *= 2;
    }
    best
}

// ---------------------------------------------------------------------------
// Solver

/// `θ_t = θ_0 + ∫_0^t A(ds, θ_s)` on the field's time grid.
pub struct YdeProblem<'a, A: ?Sized> {
    pub field: &'a A,
    pub theta0: Vec<f64>,
    pub settings: SolverSettings,
}

impl<'a, A: AveragedDrift + ?Sized> YdeProblem<'a, A> {
    pub fn new(field: &'a A, theta0: &[f64]) -> Self {
        Self { field, theta0: theta0.to_vec(), settings: SolverSettings::default() }
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }
}

/// Measured ratios of the a-priori bounds
/// `⟦θ⟧_γ ≤ C(1 + ‖A‖²)` and `‖θ‖_{C⁰} ≤ C(1 + |θ_0| + ‖A‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriReport {
    pub path_seminorm: f64,
    pub sup_norm: f64,
    pub field_norm: f64,
    pub seminorm_ratio: f64,
    pub sup_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YdeSolution {
    pub path: SamplePath,
    pub scheme: YdeScheme,
    /// Estimated discretisation error (extrapolation correction or sewing tail).
    pub scheme_error: f64,
    /// `sup|F − C| / sup|C − C'|` over three dyadic levels (Euler schemes).
    pub refinement_ratio: Option<f64>,
    pub picard_iterations: usize,
    pub apriori: AprioriReport,
}

impl YdeSolution {
    /// Tolerance used in consistency checks: the scheme error, floored at
    /// the solver tolerance.
    pub fn tolerance(&self, settings: &SolverSettings) -> f64 {
        self.scheme_error.max(settings.tol)
    }
}

fn apriori<A: AveragedDrift + ?Sized>(a: &A, path: &SamplePath, theta0: &[f64], s: &SolverSettings) -> AprioriReport {
    let (gamma, nu) = s.exponents;
    let path_seminorm = dyadic_holder(&path.values, path.dim, path.tgrid.step(), gamma);
    let sup_norm = path.sup_norm();
    let field_norm = field_norm_on_path(a, path, gamma, nu);
    let q = field_norm * field_norm;
    let t0 = sqrt(theta0.iter().map(|v| v * v).sum());
    AprioriReport {
        path_seminorm,
        sup_norm,
        field_norm,
        seminorm_ratio: path_seminorm / (1.0 + q),
        sup_ratio: sup_norm / (1.0 + t0 + q),
    }
}

fn picard<A: AveragedDrift + ?Sized>(a: &A, theta0: &[f64], s: &SolverSettings) -> Result<(SamplePath, f64, usize)> {
    let tgrid = a.tgrid();
    let d = a.dim();
    if theta0.len() != d {
        return Err(invalid("initial value dimension differs from the field"));
    }
    if tgrid.intervals() % 4 != 0 {
        return Err(invalid("the time grid must have a multiple of 4 intervals"));
    }
    let (gamma, nu) = s.exponents;
    let exponents = YoungExponents { gamma, nu, rho: gamma };
    let mut theta = SamplePath::from_fn(tgrid, d, |_, out| out.copy_from_slice(theta0));
    let r = pow(2.0, 1.0 - s.beta().max(1.0 + 1e-9));
    for it in 1..=MAX_PICARD_ITERATIONS {
        let germ = NonlinearGerm { field: a, theta: &theta, exponents };
        let integral = sew(&germ, tgrid, 3)?;
        let mut values = integral.path.values;
        for (k, v) in values.iter_mut().enumerate() {
            *v += theta0[k % d];
        }
        let change = values.iter().zip(&theta.values).map(|(p, q)| fabs(p - q)).fold(0.0, f64::max);
        for (k, chunk) in values.chunks(d).enumerate() {
            let mut st = [0.0; STATE];
            st[..d].copy_from_slice(chunk);
            check_window(&st, d, s.window, tgrid.node(k))?;
        }
        theta.values = values;
        if change < s.tol {
            let tail = r / (1.0 - r) * integral.level_differences.last().copied().unwrap_or(0.0);
            return Ok((theta, tail, it));
        }
    }
    Err(Error::NoYoungSolution(format!("Picard iteration did not settle in {MAX_PICARD_ITERATIONS} steps")))
}

pub fn solve_yde<A: AveragedDrift + ?Sized>(p: &YdeProblem<'_, A>) -> Result<YdeSolution> {
    let s = &p.settings;
    s.check()?;
    let a = p.field;
    let tgrid = a.tgrid();
    let d = a.dim();
    let (path, scheme_error, refinement_ratio, picard_iterations) = match s.scheme {
        YdeScheme::Picard => {
            let (path, tail, it) = picard(a, &p.theta0, s)?;
            (path, tail, None, it)
        }
        _ => {
            let run = euler_run(a, &p.theta0, s, 0)?;
            (states_to_path(&run.states, tgrid, d)?, run.scheme_error, run.refinement_ratio, 0)
        }
    };
    let apriori = apriori(a, &path, &p.theta0, s);
    Ok(YdeSolution { path, scheme: s.scheme, scheme_error, refinement_ratio, picard_iterations, apriori })
}

/// One characteristic `t ↦ Φ(0, t, x0)` with `∫_0^t div A(ds, Φ_s)` along it.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristic {
    pub path: SamplePath,
    /// Empty unless requested.
    pub divergence: Vec<f64>,
    pub scheme_error: f64,
}

/// Euler-sewing trajectory of `A` from `x0`, optionally carrying the
/// divergence integral. Pass a [`Reversed`] field for backward
/// characteristics.
pub fn characteristic<A: AveragedDrift + ?Sized>(
    a: &A,
    x0: &[f64],
    settings: &SolverSettings,
    with_divergence: bool,
) -> Result<Characteristic> {
    settings.check()?;
    let run = euler_run(a, x0, settings, usize::from(with_divergence))?;
    let path = states_to_path(&run.states, a.tgrid(), a.dim())?;
    let divergence = if with_divergence { run.states.iter().map(|s| s[DIV]).collect() } else { Vec::new() };
    Ok(Characteristic { path, divergence, scheme_error: run.scheme_error })
}

// ---------------------------------------------------------------------------
// Comparison

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `‖θ¹ − θ²‖_{C^γ}` in the max form of [`holder_norm`].
    pub difference: f64,
    pub sup_difference: f64,
    pub initial_gap: f64,
    /// `‖A¹ − A²‖_{C^γ Lip}` on the tubes of both trajectories.
    pub field_gap: f64,
    pub ratio: f64,
    pub first: YdeSolution,
    pub second: YdeSolution,
}

pub fn compare_solutions<A: AveragedDrift + ?Sized, B: AveragedDrift + ?Sized>(
    a1: &A,
    a2: &B,
    theta0_1: &[f64],
    theta0_2: &[f64],
    settings: SolverSettings,
) -> Result<ComparisonReport> {
    if a1.dim() != a2.dim() || a1.tgrid() != a2.tgrid() {
        return Err(invalid("compared fields must share dimension and time grid"));
    }
    let first = solve_yde(&YdeProblem { field: a1, theta0: theta0_1.to_vec(), settings })?;
    let second = solve_yde(&YdeProblem { field: a2, theta0: theta0_2.to_vec(), settings })?;
    let gamma = settings.exponents.0;
    let diff_values: Vec<f64> = first.path.values.iter().zip(&second.path.values).map(|(p, q)| p - q).collect();
    let diff = SamplePath::new(first.path.tgrid, first.path.dim, diff_values, 0, PathKind::Generic)?;
    let difference = holder_norm(&diff, gamma);
    let sup_difference = diff.sup_norm();
    let initial_gap = sqrt(theta0_1.iter().zip(theta0_2).map(|(p, q)| (p - q) * (p - q)).sum());
    let gap = Difference { left: a1, right: a2 };
    let field_gap =
        field_norm_on_path(&gap, &first.path, gamma, 1.0).max(field_norm_on_path(&gap, &second.path, gamma, 1.0));
    let denom = initial_gap + field_gap;
    let ratio = if denom > 0.0 { difference / denom } else { 0.0 };
    Ok(ComparisonReport { difference, sup_difference, initial_gap, field_gap, ratio, first, second })
}

// ---------------------------------------------------------------------------
// Flows

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub settings: SolverSettings,
    /// Highest variation carried: 0 (positions), 1 (`DΦ`), 2 (`D²Φ`).
    pub order: usize,
    /// Time nodes stored in the atlas: every `out_stride`-th node.
    pub out_stride: usize,
    /// Nodes at which the inverse flow `ψ_t` is computed (the final node
    /// triggers the `Φ∘ψ = id` check).
    pub psi_nodes: Vec<usize>,
    /// Restart node `u` of the flow-property check (`None` = `n/2`).
    pub flow_check_node: Option<usize>,
}

impl FlowOptions {
    pub fn new(n: usize) -> Self {
        Self {
            settings: SolverSettings::default(),
            order: 1,
            out_stride: (n / 64).max(1),
            psi_nodes: vec![n],
            flow_check_node: None,
        }
    }
}

/// Everything computed from one initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPoint {
    pub x0: [f64; 2],
    states: Vec<State>,
    pub psi: Vec<[f64; 2]>,
    pub inversion_mismatch: f64,
    pub flow_deviation: f64,
    pub scheme_error: f64,
    /// `⟦V⟧_γ` of the linear driver `V_t = ∫_0^t ∇A(dr, Φ_r)`.
    pub driver_seminorm: f64,
    /// `sup_t ‖DΦ_t‖`.
    pub max_jacobian_norm: f64,
}

fn end_position<A: AveragedDrift + ?Sized>(a: &A, x0: &[f64], s: &SolverSettings) -> Result<([f64; 2], f64)> {
    let run = euler_run(a, x0, s, 0)?;
    let last = run.states.last().expect("non-empty chain");
    Ok(([last[0], last[1]], run.scheme_error))
}

/// Forward trajectory with variations, inverse flow, inversion and
/// flow-property checks for one initial condition. Independent across
/// points; callers may run it in parallel and gather with [`assemble_atlas`].
pub fn flow_point<A: AveragedDrift + ?Sized>(a: &A, x0: &[f64], opts: &FlowOptions) -> Result<FlowPoint> {
    let s = &opts.settings;
    s.check()?;
    if opts.order > 2 {
        return Err(invalid("variations are implemented up to order 2"));
    }
    let tgrid = a.tgrid();
    let n = tgrid.intervals();
    let d = a.dim();
    if opts.out_stride == 0 || n % opts.out_stride != 0 {
        return Err(invalid("out_stride must divide the number of intervals"));
    }
    let run = euler_run(a, x0, s, opts.order)?;
    let mut scheme_error = run.scheme_error;

    let mut driver_seminorm = 0.0;
    let mut max_jacobian_norm: f64 = 1.0;
    if opts.order >= 1 {
        let v: Vec<f64> = run.states.iter().flat_map(|st| st[V0..V0 + 4].iter().copied()).collect();
        driver_seminorm = dyadic_holder(&v, 4, tgrid.step(), s.exponents.0);
        for st in &run.states {
            let nrm = sqrt(st[J0..J0 + 4].iter().map(|v| v * v).sum());
            if !nrm.is_finite() || nrm > 1e12 {
                return Err(Error::LinearYdeDivergence);
            }
            max_jacobian_norm = max_jacobian_norm.max(nrm);
        }
    }

    let u = opts.flow_check_node.unwrap_or(n / 2);
    let mut flow_deviation = 0.0;
    if u > 0 && u < n && (n - u) % 4 == 0 {
        let restarted = Translated { inner: a, offset: u };
        let (end, err) = end_position(&restarted, &run.states[u][..d], s)?;
        scheme_error = scheme_error.max(err);
        flow_deviation = position_distance(&run.states[n], &initial_state(&end[..d]), d);
    }

    let mut psi = Vec::with_capacity(opts.psi_nodes.len());
    let mut inversion_mismatch = 0.0;
    for &t in &opts.psi_nodes {
        if t > n {
            return Err(invalid("psi node beyond the grid"));
        }
        if t == 0 {
            let mut p = [0.0; 2];
            p[..d].copy_from_slice(x0);
            psi.push(p);
            continue;
        }
        if t % 4 != 0 {
            return Err(invalid("psi nodes must be multiples of 4"));
        }
        let reversed = Reversed { inner: a, from: t };
        let (back, err) = end_position(&reversed, x0, s)?;
        scheme_error = scheme_error.max(err);
        if t == n {
            let (there, err) = end_position(a, &back[..d], s)?;
            scheme_error = scheme_error.max(err);
            inversion_mismatch = sqrt((0..d).map(|c| (there[c] - x0[c]) * (there[c] - x0[c])).sum());
        }
        psi.push(back);
    }

    let mut x = [0.0; 2];
    x[..d].copy_from_slice(x0);
    let states = run.states.iter().step_by(opts.out_stride).copied().collect();
    Ok(FlowPoint {
        x0: x,
        states,
        psi,
        inversion_mismatch,
        flow_deviation,
        scheme_error,
        driver_seminorm,
        max_jacobian_norm,
    })
}

/// Flow `Φ(0, t, x)` of the Young equation sampled on a grid of initial
/// conditions, with its variations, Jacobian and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAtlas {
    pub x0grid: SpaceGrid,
    pub tgrid: TimeGrid,
    pub options: FlowOptions,
    pub points: Vec<FlowPoint>,
    pub scheme_error: f64,
    pub flow_deviation: f64,
    pub inversion_mismatch: f64,
}

impl FlowAtlas {
    pub fn dim(&self) -> usize {
        self.x0grid.dim()
    }

    /// Number of stored time nodes.
    pub fn times(&self) -> usize {
        self.tgrid.intervals() / self.options.out_stride + 1
    }

    /// Grid node index of stored time `ti`.
    pub fn node_of(&self, ti: usize) -> usize {
        ti * self.options.out_stride
    }

    pub fn phi(&self, ti: usize, p: usize) -> [f64; 2] {
        let s = &self.points[p].states[ti];
        [s[0], s[1]]
    }

    /// `DΦ[c][a] = ∂_a Φ_c` (identity when variations were not carried).
    pub fn dphi(&self, ti: usize, p: usize) -> [[f64; 2]; 2] {
        let s = &self.points[p].states[ti];
        [[s[J0], s[J0 + 1]], [s[J0 + 2], s[J0 + 3]]]
    }

    /// `D²Φ[c][a][b]`.
    pub fn ddphi(&self, ti: usize, p: usize) -> [[[f64; 2]; 2]; 2] {
        let s = &self.points[p].states[ti];
        let mut out = [[[0.0; 2]; 2]; 2];
        for c in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    out[c][a][b] = s[H0 + c * 4 + a * 2 + b];
                }
            }
        }
        out
    }

    /// `det DΦ`.
    pub fn jac(&self, ti: usize, p: usize) -> f64 {
        let j = self.dphi(ti, p);
        if self.dim() == 1 {
            j[0][0]
        } else {
            j[0][0] * j[1][1] - j[0][1] * j[1][0]
        }
    }

    /// `∫_0^t div A(ds, Φ_s)`.
    pub fn divergence_integral(&self, ti: usize, p: usize) -> f64 {
        self.points[p].states[ti][DIV]
    }

    /// `ψ_t(x_p)` at the `i`-th psi node.
    pub fn psi(&self, i: usize, p: usize) -> [f64; 2] {
        self.points[p].psi[i]
    }

    /// Tolerance of consistency checks: the scheme error, floored at the
    /// solver tolerance.
    pub fn tolerance(&self) -> f64 {
        self.scheme_error.max(self.options.settings.tol)
    }
}

/// Gathers per-point results (in grid order) and applies the inversion check.
pub fn assemble_atlas(
    x0grid: SpaceGrid,
    tgrid: TimeGrid,
    options: FlowOptions,
    points: Vec<FlowPoint>,
) -> Result<FlowAtlas> {
    if points.len() != x0grid.size() {
        return Err(invalid("one flow point per grid node is required"));
    }
    let scheme_error = points.iter().map(|p| p.scheme_error).fold(0.0, f64::max);
    let flow_deviation = points.iter().map(|p| p.flow_deviation).fold(0.0, f64::max);
    let inversion_mismatch = points.iter().map(|p| p.inversion_mismatch).fold(0.0, f64::max);
    let atlas = FlowAtlas { x0grid, tgrid, options, points, scheme_error, flow_deviation, inversion_mismatch };
    let limit = 10.0 * atlas.tolerance();
    if inversion_mismatch > limit {
        return Err(Error::FlowInversion { mismatch: inversion_mismatch, limit });
    }
    Ok(atlas)
}

pub fn compute_flow<A: AveragedDrift + ?Sized>(a: &A, x0grid: &SpaceGrid, opts: &FlowOptions) -> Result<FlowAtlas> {
    if x0grid.dim() != a.dim() {
        return Err(invalid("grid dimension differs from the field"));
    }
    let points =
        (0..x0grid.size()).map(|p| flow_point(a, &x0grid.point(p)[..a.dim()], opts)).collect::<Result<Vec<_>>>()?;
    assemble_atlas(*x0grid, a.tgrid(), opts.clone(), points)
}

fn ensure_order<A: AveragedDrift + ?Sized>(a: &A, atlas: &mut FlowAtlas, order: usize) -> Result<()> {
    if atlas.options.order < order {
        let mut opts = atlas.options.clone();
        opts.order = order;
        *atlas = compute_flow(a, &atlas.x0grid, &opts)?;
    }
    Ok(())
}

/// Grid-neighbour index of `p` shifted by `delta` along `axis`, if interior.
fn neighbour(grid: &SpaceGrid, p: usize, axis: usize, delta: isize) -> Option<usize> {
    let m = grid.points();
    // Flat index is row-major with x fastest: p = iy·m + ix.
    let (ix, iy) = if grid.dim() == 1 { (p, 0) } else { (p % m, p / m) };
    let idx = if axis == 0 { ix } else { iy } as isize + delta;
    if idx < 0 || idx >= m as isize {
        return None;
    }
    let idx = idx as usize;
    Some(if grid.dim() == 1 {
        idx
    } else if axis == 0 {
        iy * m + idx
    } else {
        idx * m + ix
    })
}

fn interior(grid: &SpaceGrid, p: usize) -> bool {
    (0..grid.dim()).all(|axis| neighbour(grid, p, axis, -1).is_some() && neighbour(grid, p, axis, 1).is_some())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalReport {
    /// `max ‖DΦ − FD(Φ)‖` (or `D²Φ` against `FD(DΦ)`) over interior points
    /// and stored times.
    pub fd_deviation: f64,
    /// Finite-difference step (the grid spacing).
    pub fd_step: f64,
    /// `max_t ‖DΦ_t‖`.
    pub max_norm: f64,
    /// Measured `C` in `‖DΦ‖ ≤ exp(C ⟦V⟧_γ^{1/γ} T)`, max over points.
    pub growth_constant: f64,
}

/// Carries `DΦ` along every trajectory (recomputing the atlas if needed)
/// and cross-checks it against central differences of `Φ` in `x_0`.
pub fn variational_derivative<A: AveragedDrift + ?Sized>(a: &A, atlas: &mut FlowAtlas) -> Result<VariationalReport> {
    ensure_order(a, atlas, 1)?;
    let grid = atlas.x0grid;
    let h = grid.spacing();
    let d = atlas.dim();
    let gamma = atlas.options.settings.exponents.0;
    let horizon = atlas.tgrid.span();
    let mut fd_deviation: f64 = 0.0;
    for p in 0..grid.size() {
        if !interior(&grid, p) {
            continue;
        }
        for ti in 0..atlas.times() {
            let j = atlas.dphi(ti, p);
            for axis in 0..d {
                let hi = atlas.phi(ti, neighbour(&grid, p, axis, 1).expect("interior"));
                let lo = atlas.phi(ti, neighbour(&grid, p, axis, -1).expect("interior"));
                for c in 0..d {
                    let fd = (hi[c] - lo[c]) / (2.0 * h);
                    fd_deviation = fd_deviation.max(fabs(fd - j[c][axis]));
                }
            }
        }
    }
    let max_norm = atlas.points.iter().map(|p| p.max_jacobian_norm).fold(0.0, f64::max);
    let growth_constant = atlas
        .points
        .iter()
        .map(|p| {
            let denom = pow(p.driver_seminorm, 1.0 / gamma) * horizon;
            if denom > 0.0 {
                log(p.max_jacobian_norm.max(1.0)) / denom
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(VariationalReport { fd_deviation, fd_step: h, max_norm, growth_constant })
}

/// Carries `D²Φ` (forcing `D²A[DΦ, DΦ]`) and cross-checks it against
/// central differences of `DΦ` in `x_0`.
pub fn second_variation<A: AveragedDrift + ?Sized>(a: &A, atlas: &mut FlowAtlas) -> Result<VariationalReport> {
    ensure_order(a, atlas, 2)?;
    let grid = atlas.x0grid;
    let h = grid.spacing();
    let d = atlas.dim();
    let mut fd_deviation: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    for p in 0..grid.size() {
        for ti in 0..atlas.times() {
            let q = atlas.ddphi(ti, p);
            let nrm = sqrt(q.iter().flatten().flatten().map(|v| v * v).sum());
            if !nrm.is_finite() || nrm > 1e12 {
                return Err(Error::LinearYdeDivergence);
            }
            max_norm = max_norm.max(nrm);
            if !interior(&grid, p) {
                continue;
            }
            for axis in 0..d {
                let hi = atlas.dphi(ti, neighbour(&grid, p, axis, 1).expect("interior"));
                let lo = atlas.dphi(ti, neighbour(&grid, p, axis, -1).expect("interior"));
                for c in 0..d {
                    for b in 0..d {
                        let fd = (hi[c][b] - lo[c][b]) / (2.0 * h);
                        fd_deviation = fd_deviation.max(fabs(fd - q[c][b][axis]));
                    }
                }
            }
        }
    }
    Ok(VariationalReport { fd_deviation, fd_step: h, max_norm, growth_constant: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianReport {
    /// `max |det DΦ − exp(∫ div A(ds, Φ_s))| / exp(∫ div A(ds, Φ_s))`.
    pub max_deviation: f64,
    pub min_jac: f64,
    pub max_jac: f64,
    /// Smallest `C` with `C^{-1} ≤ JΦ ≤ C` on the atlas.
    pub bound_constant: f64,
}

/// Compares `det DΦ` with the exponential of the divergence integral along
/// each trajectory.
pub fn jacobian_identity_check<A: AveragedDrift + ?Sized>(a: &A, atlas: &mut FlowAtlas) -> Result<JacobianReport> {
    ensure_order(a, atlas, 1)?;
    let mut max_deviation: f64 = 0.0;
    let mut min_jac = f64::INFINITY;
    let mut max_jac: f64 = 0.0;
    for p in 0..atlas.x0grid.size() {
        for ti in 0..atlas.times() {
            let j = atlas.jac(ti, p);
            let e = exp(atlas.divergence_integral(ti, p));
            max_deviation = max_deviation.max(fabs(j - e) / e);
            min_jac = min_jac.min(j);
            max_jac = max_jac.max(j);
        }
    }
    let bound_constant = if min_jac > 0.0 { max_jac.max(1.0 / min_jac) } else { f64::INFINITY };
    Ok(JacobianReport { max_deviation, min_jac, max_jac, bound_constant })
}

// ---------------------------------------------------------------------------
// Shift identity

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftIdentityReport {
    /// `∫_0^t T^{w+θ}b(ds, η_s)`.
    pub composite: SamplePath,
    /// `∫_0^t T^w b(ds, η_s + θ_s)`.
    pub shifted: SamplePath,
    pub deviation: f64,
}

/// Both sides of the shift identity for fields already averaged along
/// `w + θ` (`composite`) and along `w` (`base`).
pub fn shift_identity_check<A: AveragedDrift + ?Sized, B: AveragedDrift + ?Sized>(
    composite: &A,
    base: &B,
    theta: &SamplePath,
    eta: &SamplePath,
    exponents: YoungExponents,
    levels: usize,
) -> Result<ShiftIdentityReport> {
    if theta.len() != eta.len() || theta.dim != eta.dim {
        return Err(invalid("θ and η must share grid and dimension"));
    }
    let lhs = sew(&NonlinearGerm { field: composite, theta: eta, exponents }, eta.tgrid, levels)?;
    let moved: Vec<f64> = eta.values.iter().zip(&theta.values).map(|(p, q)| p + q).collect();
    let moved = SamplePath::new(eta.tgrid, eta.dim, moved, 0, PathKind::Generic)?;
    let rhs = sew(&NonlinearGerm { field: base, theta: &moved, exponents }, eta.tgrid, levels)?;
    let deviation = lhs.path.values.iter().zip(&rhs.path.values).map(|(p, q)| fabs(p - q)).fold(0.0, f64::max);
    Ok(ShiftIdentityReport { composite: lhs.path, shifted: rhs.path, deviation })
}

// ---------------------------------------------------------------------------
// Peano demonstration

/// `b(x) = sign(x)|x|^κ`.
pub fn peano_drift(kappa: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * pow(fabs(x), kappa)
    }
}

/// Euler scheme for `x_t = x_0 + ∫_0^t b(x_s) ds + w_t` along a path.
fn peano_run(kappa: f64, x0: f64, w: &SamplePath) -> Vec<f64> {
    let dt = w.tgrid.step();
    let n = w.tgrid.intervals();
    let mut x = Vec::with_capacity(n + 1);
    let mut cur = x0;
    x.push(cur);
    for k in 0..n {
        cur += peano_drift(kappa, cur) * dt + (w.values[k + 1] - w.values[k]);
        x.push(cur);
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeanoSample {
    pub seed: u64,
    /// `sup_t |x⁺_t − x⁻_t|` of the runs started at `±PEANO_START`.
    pub separation: f64,
    pub coincide: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeanoReport {
    pub kappa: f64,
    pub hurst: f64,
    /// `|x⁺_T − x⁻_T|` without noise.
    pub control_separation: f64,
    pub control_coincide: bool,
    pub samples: Vec<PeanoSample>,
    pub coincidence_rate: f64,
}

/// Two runs of the non-Lipschitz ODE from `±PEANO_START`, without noise and
/// along fBm paths with Hurst parameter `hurst`, on `[0, 1]` with `n` steps.
pub fn peano_experiment(kappa: f64, hurst: f64, seeds: &[u64], n: usize) -> Result<PeanoReport> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(invalid("κ must lie in (0, 1]"));
    }
    let tgrid = TimeGrid::unit(1.0, n)?;
    let zero = SamplePath::from_fn(tgrid, 1, |_, out| out[0] = 0.0);
    let plus = peano_run(kappa, PEANO_START, &zero);
    let minus = peano_run(kappa, -PEANO_START, &zero);
    let control_separation = fabs(plus[n] - minus[n]);
    let control_sup = plus.iter().zip(&minus).map(|(p, q)| fabs(p - q)).fold(0.0, f64::max);
    let mut samples = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let w = sample_fbm_exact(hurst, tgrid, seed, 1)?;
        let plus = peano_run(kappa, PEANO_START, &w);
        let minus = peano_run(kappa, -PEANO_START, &w);
        let separation = plus.iter().zip(&minus).map(|(p, q)| fabs(p - q)).fold(0.0, f64::max);
        samples.push(PeanoSample { seed, separation, coincide: separation < PEANO_COINCIDENCE });
    }
    let hits = samples.iter().filter(|s| s.coincide).count();
    let coincidence_rate = if samples.is_empty() { 0.0 } else { hits as f64 / samples.len() as f64 };
    Ok(PeanoReport {
        kappa,
        hurst,
        control_separation,
        control_coincide: control_sup < PEANO_COINCIDENCE,
        samples,
        coincidence_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::FnField;

    fn linear_1d(lambda: f64, n: usize) -> FnField<impl Fn(f64, &[f64], usize) -> Jet> {
        FnField {
            dim: 1,
            tgrid: TimeGrid::unit(1.0, n).unwrap(),
            f: move |t: f64, x: &[f64], _o: usize| {
                let mut j = Jet::default();
                j.value[0] = t * lambda * x[0];
                j.grad[0][0] = t * lambda;
                j
            },
        }
    }

    #[test]
    fn zero_field_keeps_the_initial_value() {
        let a = FnField {
            dim: 2,
            tgrid: TimeGrid::unit(1.0, 64).unwrap(),
            f: |_: f64, _: &[f64], _: usize| Jet::default(),
        };
        let sol = solve_yde(&YdeProblem::new(&a, &[0.3, -1.0])).unwrap();
        assert!(sol.path.values.chunks(2).all(|p| p == [0.3, -1.0]));
        assert_eq!(sol.refinement_ratio, None);
    }

    #[test]
    fn linear_drift_matches_exponential() {
        let a = linear_1d(1.0, 1 << 12);
        let sol = solve_yde(&YdeProblem::new(&a, &[0.7])).unwrap();
        let end = sol.path.point(1 << 12)[0];
        let exact = 0.7 * core::f64::consts::E;
        assert!(fabs(end - exact) / exact < 1e-4, "{end} vs {exact}");
        let r = sol.refinement_ratio.unwrap();
        assert!((r - 0.5).abs() < 0.05, "{r}");
    }

    #[test]
    fn picard_agrees_with_euler() {
        let a = linear_1d(-0.8, 1 << 10);
        let euler = solve_yde(&YdeProblem::new(&a, &[1.0])).unwrap();
        let settings = SolverSettings { scheme: YdeScheme::Picard, ..Default::default() };
        let picard = solve_yde(&YdeProblem::new(&a, &[1.0]).with_settings(settings)).unwrap();
        let dev = euler.path.values.iter().zip(&picard.path.values).map(|(p, q)| fabs(p - q)).fold(0.0, f64::max);
        assert!(dev < 5.0 * euler.scheme_error.max(picard.scheme_error), "{dev}");
        assert!(picard.picard_iterations > 3);
    }

    #[test]
    fn window_exit_is_reported() {
        let a = linear_1d(5.0, 64);
        let settings = SolverSettings { window: 2.0, ..Default::default() };
        let err = solve_yde(&YdeProblem::new(&a, &[1.0]).with_settings(settings)).unwrap_err();
        assert!(matches!(err, Error::Localisation(_)));
    }

    #[test]
    fn sub_young_exponents_are_rejected() {
        let a = linear_1d(1.0, 64);
        let settings = SolverSettings { exponents: (0.5, 0.9), ..Default::default() };
        assert!(matches!(
            solve_yde(&YdeProblem::new(&a, &[1.0]).with_settings(settings)),
            Err(Error::YoungCondition(_))
        ));
    }

    #[test]
    fn reversal_is_an_involution() {
        let g = TimeGrid::unit(1.0, 16).unwrap();
        let p = SamplePath::from_fn(g, 2, |t, out| {
            out[0] = t * t;
            out[1] = -t;
        });
        assert_eq!(reverse_path(&reverse_path(&p)), p);
        assert_eq!(reverse_path(&p).point(0), p.point(16));
    }

    #[test]
    fn peano_control_splits_and_noise_reunites() {
        let r = peano_experiment(0.5, 0.2, &[1, 2, 3, 4], 1 << 12).unwrap();
        assert!(r.control_separation > 0.1, "{}", r.control_separation);
        assert!(r.coincidence_rate >= 0.75, "{:?}", r.samples);
        let lip = peano_experiment(1.0, 0.2, &[1, 2], 1 << 10).unwrap();
        assert!(lip.control_coincide);
        assert_eq!(lip.coincidence_rate, 1.0);
    }
}
