//! The averaging operator `T^w b(t, x) = ∫_0^t b(s, x + w_s) ds`.
//!
//! Two routes are provided:
//!
//! * spectral: a time-independent drift stored as periodic box modes
//!   `b(x) = Σ_k c_k e^{iξ_k x}`, `ξ_k = πk/L`. Averaging acts mode-wise,
//!   `T^w[e^{iξx}](t) = e^{iξx} Φ_ξ(t)` with `Φ_ξ(t) = ∫_0^t e^{iξ w_s} ds`,
//!   and `Φ_ξ` is integrated exactly for the piecewise-linear interpolant of
//!   the path. Drifts of negative regularity are never evaluated pointwise.
//! * grid: trapezoid in time of slices shifted by cubic interpolation; this
//!   route also handles time-dependent drifts and two space dimensions.
//!
//! The module also carries the Itô–Tanaka decomposition of `T^{W}b_{s,t}`
//! along fBm, the regularity-gain thresholds and the gain experiment.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::gaussian::{sample_fbm_exact, SamplePath, VolterraDriver, MIN_BACK_RATIO};
use crate::gridcore::{
    central_difference, estimate_regularity_from_block_norms, finest_block, interpolate, littlewood_paley_blocks,
    lp_multiplier, Mollifier, RegularityEstimate, ScalarField, SpaceGrid, SpaceTimeField, TimeGrid, MIN_SCALES,
};
use crate::math::{cis, exp, fabs, log2, pow, sqrt, C64};
use crate::rng::{streams, CounterRng};
use crate::stats::{linear_fit, median};

/// Margin subtracted from predicted exponents when reporting; the strict
/// inequalities of the theory carry no constants.
pub const EPSILON_MARGIN: f64 = 0.1;

// ---------------------------------------------------------------------------
// Spectral drifts

/// Real drift on the periodic box `[-L, L)` stored by its modes `k ≥ 0`;
/// negative modes follow from Hermitian symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDrift {
    pub half_width: f64,
    /// `c_k` for `k = 0..=K`.
    pub coeffs: Vec<C64>,
    pub alpha: f64,
    pub support_radius: f64,
    pub seed: u64,
}

impl SpectralDrift {
    pub fn from_coeffs(half_width: f64, coeffs: Vec<C64>) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(invalid("box half-width must be positive"));
        }
        if coeffs.is_empty() {
            return Err(invalid("drift needs at least the zero mode"));
        }
        let mut coeffs = coeffs;
        coeffs[0].im = 0.0;
        Ok(Self { half_width, coeffs, alpha: f64::NAN, support_radius: half_width, seed: 0 })
    }

    /// Projection of grid samples onto modes `0..=modes`.
    pub fn from_field(f: &ScalarField, modes: usize) -> Result<Self> {
        let g = f.grid;
        if g.dim() != 1 {
            return Err(invalid("spectral drifts are one-dimensional"));
        }
        let m = g.points();
        if modes >= m / 2 {
            return Err(invalid("too many modes for the sampling grid"));
        }
        let mut buf: Vec<C64> = f.values.iter().map(|v| C64::new(*v, 0.0)).collect();
        fft::forward(&mut buf)?;
        let coeffs = (0..=modes).map(|k| buf[k] * (alternating(k) / m as f64)).collect();
        Self::from_coeffs(g.half_width(), coeffs)
    }

    /// Highest stored mode `K`.
    pub fn modes(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of signed mode `k`.
    pub fn coeff(&self, k: i64) -> C64 {
        let c = self.coeffs.get(k.unsigned_abs() as usize).copied().unwrap_or_default();
        if k < 0 {
            c.conj()
        } else {
            c
        }
    }

    #[inline]
    pub fn frequency(&self, k: usize) -> f64 {
        PI * k as f64 / self.half_width
    }

    /// `∂^order b(x)`.
    pub fn eval(&self, x: f64, order: u32) -> f64 {
        eval_modes(self.half_width, &self.coeffs, x, order)
    }

    /// Values on `grid`, which must be the drift's box with more than `2K`
    /// points.
    pub fn render(&self, grid: &SpaceGrid, order: u32) -> Result<ScalarField> {
        let c = derivative_coeffs(self.half_width, &self.coeffs, order);
        ScalarField::new(*grid, render_modes(self.half_width, &c, grid)?)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c *= a;
        }
        out
    }

    /// `self + other` on the same box.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if fabs(self.half_width - other.half_width) > 1e-12 * self.half_width {
            return Err(invalid("drifts live on different boxes"));
        }
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|k| self.coeffs.get(k).copied().unwrap_or_default() + other.coeffs.get(k).copied().unwrap_or_default())
            .collect();
        let mut out = self.clone();
        out.coeffs = coeffs;
        Ok(out)
    }

    /// `∂^order b` as a drift.
    pub fn derivative(&self, order: u32) -> Self {
        let mut out = self.clone();
        out.coeffs = derivative_coeffs(self.half_width, &self.coeffs, order);
        out
    }

    /// Mode-wise multiplier `b ↦ Σ_k m(ξ_k) c_k e^{iξ_k x}`.
    pub fn multiplied(&self, mut multiplier: impl FnMut(f64) -> C64) -> Self {
        let mut out = self.clone();
        for (k, c) in out.coeffs.iter_mut().enumerate() {
            *c *= multiplier(PI * k as f64 / self.half_width);
        }
        out
    }

    /// `ρ^ε * b` with the standard bump mollifier.
    pub fn mollified(&self, eps: f64) -> Self {
        self.multiplied(|xi| C64::new(Mollifier::fourier_factor_1d(eps, xi), 0.0))
    }

    /// `L²` norm over the box (Parseval).
    pub fn l2_norm(&self) -> f64 {
        modes_l2(self.half_width, &self.coeffs)
    }
}

#[inline]
fn alternating(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `(iξ)^order` for frequency `xi`.
fn i_xi_pow(xi: f64, order: u32) -> C64 {
    let mag = pow(xi, order as f64);
    match order % 4 {
        0 => C64::new(mag, 0.0),
        1 => C64::new(0.0, mag),
        2 => C64::new(-mag, 0.0),
        _ => C64::new(0.0, -mag),
    }
}

fn derivative_coeffs(half_width: f64, coeffs: &[C64], order: u32) -> Vec<C64> {
    if order == 0 {
        return coeffs.to_vec();
    }
    coeffs.iter().enumerate().map(|(k, c)| *c * i_xi_pow(PI * k as f64 / half_width, order)).collect()
}

fn eval_modes(half_width: f64, coeffs: &[C64], x: f64, order: u32) -> f64 {
    let base = cis(PI * x / half_width);
    let mut e = base;
    let mut acc = if order == 0 { coeffs[0].re } else { 0.0 };
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        acc += 2.0 * (*c * i_xi_pow(PI * k as f64 / half_width, order) * e).re;
        e *= base;
    }
    acc
}

fn modes_l2(half_width: f64, coeffs: &[C64]) -> f64 {
    let mut s = coeffs[0].norm_sqr();
    for c in &coeffs[1..] {
        s += 2.0 * c.norm_sqr();
    }
    sqrt(2.0 * half_width * s)
}

/// Real values of `Σ_{|k|≤K} c_k e^{iξ_k x}` at the nodes of `grid`.
pub(crate) fn render_modes(half_width: f64, coeffs: &[C64], grid: &SpaceGrid) -> Result<Vec<f64>> {
    if grid.dim() != 1 {
        return Err(invalid("spectral rendering is one-dimensional"));
    }
    if fabs(grid.half_width() - half_width) > 1e-12 * half_width {
        return Err(invalid("grid box differs from the drift box"));
    }
    let m = grid.points();
    if coeffs.len() > m / 2 {
        return Err(invalid("grid too coarse for the drift's modes"));
    }
    let mut buf = vec![C64::default(); m];
    for (k, c) in coeffs.iter().enumerate() {
        let z = *c * (alternating(k) * m as f64);
        if k == 0 {
            buf[0] = C64::new(z.re, 0.0);
        } else {
            buf[k] = z;
            buf[m - k] = z.conj();
        }
    }
    fft::inverse(&mut buf)?;
    Ok(buf.iter().map(|z| z.re).collect())
}

/// Smooth window equal to one on `|r| ≤ 1/2` and zero for `|r| ≥ 1`.
fn window(r: f64) -> f64 {
    let r = fabs(r);
    if r <= 0.5 {
        return 1.0;
    }
    if r >= 1.0 {
        return 0.0;
    }
    let t = (1.0 - r) / 0.5;
    let f = |u: f64| if u > 0.0 { exp(-1.0 / u) } else { 0.0 };
    f(t) / (f(t) + f(1.0 - t))
}

/// Random drift of Besov regularity `alpha` on the box `[-L, L)`, windowed to
/// `[-R, R]`.
///
/// Raw modes `k = 1..=K` have modulus `|g_k| (1+k)^{-(α+1/2)}` with `g_k`
/// standard Gaussian and a uniform phase. Windowing spreads each mode over a
/// few neighbours, so modes up to `K + 16 L/R` are kept.
pub fn synthesize_drift(
    alpha: f64,
    k_modes: usize,
    support_radius: f64,
    half_width: f64,
    seed: u64,
) -> Result<SpectralDrift> {
    if k_modes < 16 {
        return Err(invalid("synthesis needs at least 16 modes"));
    }
    if !(support_radius > 0.0 && support_radius < half_width) {
        return Err(invalid("support radius must lie in (0, L)"));
    }
    if !alpha.is_finite() {
        return Err(invalid("alpha must be finite"));
    }
    let rng = CounterRng::new(seed);
    let stream = streams::with_component(streams::DRIFT, 0);
    let mut raw = vec![C64::default(); k_modes + 1];
    raw[0] = C64::new(rng.normal(stream, 0), 0.0);
    for (k, c) in raw.iter_mut().enumerate().skip(1) {
        let amp = fabs(rng.normal(stream, 2 * k as u64)) * pow(1.0 + k as f64, -(alpha + 0.5));
        *c = cis(2.0 * PI * rng.uniform(stream, 2 * k as u64 + 1)) * amp;
    }
    let pad = libm::ceil(16.0 * half_width / support_radius) as usize;
    let kept = k_modes + pad;
    let m = (4 * (kept + 1)).next_power_of_two();
    let grid = SpaceGrid::new(half_width, m, 1)?;
    let values = render_modes(half_width, &raw, &grid)?;
    let windowed: Vec<f64> =
        values.iter().enumerate().map(|(i, v)| v * window(grid.coord(i) / support_radius)).collect();
    let f = ScalarField::new(grid, windowed)?;
    let mut drift = SpectralDrift::from_field(&f, kept)?;
    drift.alpha = alpha;
    drift.support_radius = support_radius;
    drift.seed = seed;
    Ok(drift)
}

/// Rescale the modes of `drift` so that its Littlewood–Paley block sup norms
/// decay exactly like `2^{-jα}` over blocks `j_min..=j_max`, keeping their
/// geometric mean. A random series with the nominal spectrum only reaches the
/// exponent up to log factors and seed scatter; calibration makes the drift's
/// measured regularity equal to `alpha`.
///
/// The per-block factors are spread over modes with the (smooth) block
/// multipliers, so the correction is a smooth Fourier multiplier and barely
/// moves the support. Returns the exponent measured after the last sweep.
pub fn calibrate_block_exponent(drift: &mut SpectralDrift, alpha: f64, j_min: i32, j_max: i32) -> Result<f64> {
    const SWEEPS: usize = 12;
    const TOLERANCE: f64 = 1e-4;
    if j_min < 0 || j_max - j_min + 1 < MIN_SCALES as i32 {
        return Err(Error::TooFewScales { got: (j_max - j_min + 1).max(0) as usize, needed: MIN_SCALES });
    }
    let m = (4 * (drift.modes() + 1)).next_power_of_two().max(1usize << (j_max + 4));
    let grid = SpaceGrid::new(drift.half_width, m, 1)?;
    let finest = finest_block(m);
    let mut measured = f64::NAN;
    for _ in 0..SWEEPS {
        let norms = block_sup_norms(&drift.render(&grid, 0)?)?;
        measured = estimate_regularity_from_block_norms(&norms, j_min, j_max)?.exponent;
        if fabs(measured - alpha) < TOLERANCE {
            break;
        }
        let logs: Vec<f64> = (j_min..=j_max).map(|j| log2(norms[(j + 1) as usize]) + alpha * j as f64).collect();
        let level = logs.iter().sum::<f64>() / logs.len() as f64;
        let factor = |j: i32| {
            let j = j.clamp(j_min, j_max);
            pow(2.0, level - logs[(j - j_min) as usize])
        };
        for (k, c) in drift.coeffs.iter_mut().enumerate().skip(1) {
            let mu: f64 = (-1..=finest).map(|j| lp_multiplier(j, k as f64, finest) * factor(j)).sum();
            *c *= mu;
        }
    }
    Ok(measured)
}

// ---------------------------------------------------------------------------
// Phase integrals

/// `(e^{iz} - 1)/(iz)`, with a series near zero.
#[inline]
fn phase_mean(z: f64, e: C64) -> C64 {
    if fabs(z) < 1e-3 {
        let z2 = z * z;
        C64::new(1.0 - z2 / 6.0, z / 2.0 - z * z2 / 24.0)
    } else {
        (e - 1.0) / C64::new(0.0, z)
    }
}

/// `Φ_k(t) = ∫_0^t e^{iξ_k w_s} ds` for `ξ_k = k ξ_1`, `k = 0..=modes`, at
/// every `stride`-th node of a scalar path.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTable {
    pub out_grid: TimeGrid,
    pub modes: usize,
    /// `[time][mode]`.
    pub values: Vec<C64>,
}

impl PhaseTable {
    #[inline]
    pub fn get(&self, t: usize, k: usize) -> C64 {
        self.values[t * (self.modes + 1) + k]
    }
}

/// Exact phase integrals for the piecewise-linear interpolant of `w`.
pub fn phase_integrals(base_frequency: f64, modes: usize, w: &SamplePath, stride: usize) -> Result<PhaseTable> {
    if w.dim != 1 {
        return Err(invalid("phase integrals need a scalar path"));
    }
    let out_grid = w.tgrid.coarsen(stride)?;
    let n = w.tgrid.intervals();
    let dt = w.tgrid.step();
    let width = modes + 1;
    let mut values = Vec::with_capacity(out_grid.len() * width);
    let mut acc = vec![C64::default(); width];
    values.extend_from_slice(&acc);
    for i in 0..n {
        let w0 = w.values[i];
        let dw = w.values[i + 1] - w0;
        let e1 = cis(base_frequency * w0);
        let d1 = cis(base_frequency * dw);
        let z1 = base_frequency * dw;
        acc[0].re += dt;
        let mut e = C64::new(1.0, 0.0);
        let mut d = C64::new(1.0, 0.0);
        for (k, a) in acc.iter_mut().enumerate().skip(1) {
            e *= e1;
            d *= d1;
            *a += e * phase_mean(k as f64 * z1, d) * dt;
        }
        if (i + 1) % stride == 0 {
            values.extend_from_slice(&acc);
        }
    }
    Ok(PhaseTable { out_grid, modes, values })
}

// ---------------------------------------------------------------------------
// Averaged fields

/// Spatial jet of a field with up to two components: value, gradient
/// `grad[c][a] = ∂_a A_c` and Hessian `hess[c][a][b]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
    pub hess: [[[f64; 2]; 2]; 2],
}

/// Time-gridded vector field `A(t_k, x)` on `R^d`, `d ∈ {1, 2}`, evaluated
/// with derivatives. Averaged drifts are consumed through this interface by
/// the Young and flow solvers.
pub trait AveragedDrift {
    fn dim(&self) -> usize;
    fn tgrid(&self) -> TimeGrid;
    /// Jet of `A(t_k, x)` up to `order ≤ 2`.
    fn jet(&self, k: usize, x: &[f64], order: usize) -> Jet;

    fn value(&self, k: usize, x: &[f64]) -> [f64; 2] {
        self.jet(k, x, 0).value
    }
}

/// `A(t, x) = f(t, x, order)` sampled on a time grid.
pub struct FnField<F> {
    pub dim: usize,
    pub tgrid: TimeGrid,
    pub f: F,
}

impl<F: Fn(f64, &[f64], usize) -> Jet> AveragedDrift for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn tgrid(&self) -> TimeGrid {
        self.tgrid
    }
    fn jet(&self, k: usize, x: &[f64], order: usize) -> Jet {
        (self.f)(self.tgrid.node(k), x, order)
    }
}

/// `T^w b` for a spectral drift: mode coefficients `c_k Φ_k(t)` on the output
/// grid, evaluable exactly at any point.
#[derive(Debug, Clone)]
pub struct SpectralAverage {
    pub drift: SpectralDrift,
    pub phases: PhaseTable,
}

impl SpectralAverage {
    pub fn new(b: &SpectralDrift, w: &SamplePath, stride: usize) -> Result<Self> {
        check_localisation(w, b.support_radius, b.half_width)?;
        let phases = phase_integrals(PI / b.half_width, b.modes(), w, stride)?;
        Ok(Self { drift: b.clone(), phases })
    }

    /// Coefficients of `T^w b(t_k)`.
    pub fn coeffs_at(&self, k: usize) -> Vec<C64> {
        self.drift.coeffs.iter().enumerate().map(|(j, c)| *c * self.phases.get(k, j)).collect()
    }

    /// `∂^order T^w b(t_k, x)`.
    pub fn eval(&self, k: usize, x: f64, order: u32) -> f64 {
        eval_modes(self.drift.half_width, &self.coeffs_at(k), x, order)
    }

    pub fn render(&self, k: usize, grid: &SpaceGrid, order: u32) -> Result<ScalarField> {
        let c = derivative_coeffs(self.drift.half_width, &self.coeffs_at(k), order);
        ScalarField::new(*grid, render_modes(self.drift.half_width, &c, grid)?)
    }

    /// Field and derivative stack (orders `0..=3`) on `grid`.
    pub fn to_field(&self, grid: &SpaceGrid) -> Result<AveragedField> {
        let tgrid = self.phases.out_grid;
        let mut stack = Vec::with_capacity(4);
        for order in 0..=3u32 {
            let mut f = SpaceTimeField::zeros(tgrid, *grid, 1);
            for k in 0..tgrid.len() {
                let slice = self.render(k, grid, order)?;
                f.slice_mut(k, 0).copy_from_slice(&slice.values);
            }
            stack.push(f);
        }
        Ok(AveragedField { stack, gamma_est: None, beta_est: None })
    }
}

impl AveragedDrift for SpectralAverage {
    fn dim(&self) -> usize {
        1
    }
    fn tgrid(&self) -> TimeGrid {
        self.phases.out_grid
    }
    fn jet(&self, k: usize, x: &[f64], order: usize) -> Jet {
        let base = cis(PI * x[0] / self.drift.half_width);
        let mut e = base;
        let mut v = [self.drift.coeffs[0].re * self.phases.get(k, 0).re, 0.0, 0.0];
        for j in 1..self.drift.coeffs.len() {
            let a = self.drift.coeffs[j] * self.phases.get(k, j) * e;
            let xi = self.drift.frequency(j);
            v[0] += 2.0 * a.re;
            if order >= 1 {
                v[1] -= 2.0 * xi * a.im;
            }
            if order >= 2 {
                v[2] -= 2.0 * xi * xi * a.re;
            }
            e *= base;
        }
        let mut jet = Jet::default();
        jet.value[0] = v[0];
        jet.grad[0][0] = v[1];
        jet.hess[0][0][0] = v[2];
        jet
    }
}

/// `T^w b` on a space–time grid with its spatial derivative stack:
/// `stack[0]` is the field and `stack[j]` holds `∂^j` (for `d = 2`, component
/// `c d^j + Σ a_i d^{j-i}` is `∂_{a_1}..∂_{a_j}` of component `c`).
#[derive(Debug, Clone)]
pub struct AveragedField {
    pub stack: Vec<SpaceTimeField>,
    pub gamma_est: Option<RegularityEstimate>,
    pub beta_est: Option<RegularityEstimate>,
}

impl AveragedField {
    pub fn field(&self) -> &SpaceTimeField {
        &self.stack[0]
    }

    /// Builds the derivative stack by repeated central differences.
    pub fn with_difference_stack(field: SpaceTimeField, max_order: usize) -> Self {
        let mut stack = vec![field];
        let d = stack[0].sgrid.dim();
        for _ in 0..max_order {
            let prev = stack.last().expect("stack is nonempty");
            let comps = prev.components * d;
            let mut next = SpaceTimeField::zeros(prev.tgrid, prev.sgrid, comps);
            for k in 0..prev.tgrid.len() {
                for c in 0..prev.components {
                    for a in 0..d {
                        let diff = central_difference(&prev.sgrid, prev.slice(k, c), a);
                        next.slice_mut(k, c * d + a).copy_from_slice(&diff);
                    }
                }
            }
            stack.push(next);
        }
        Self { stack, gamma_est: None, beta_est: None }
    }

    /// Fills `beta_est` (spatial exponent of the final slice) and `gamma_est`
    /// (time exponent in sup norm).
    pub fn estimate(&mut self) -> Result<()> {
        let f = self.field();
        let last = f.tgrid.len() - 1;
        let beta = crate::gridcore::estimate_spatial_regularity(&f.slice_field(last, 0))?;
        let gamma = estimate_time_exponent(f)?;
        self.beta_est = Some(beta);
        self.gamma_est = Some(gamma);
        Ok(())
    }
}

impl AveragedDrift for AveragedField {
    fn dim(&self) -> usize {
        self.stack[0].sgrid.dim()
    }
    fn tgrid(&self) -> TimeGrid {
        self.stack[0].tgrid
    }
    fn jet(&self, k: usize, x: &[f64], order: usize) -> Jet {
        let d = self.dim();
        let comps = self.stack[0].components.min(2);
        let mut jet = Jet::default();
        let sample = |f: &SpaceTimeField, c: usize| interpolate(&f.sgrid, f.slice(k, c), x);
        for c in 0..comps {
            jet.value[c] = sample(&self.stack[0], c);
            if order >= 1 && self.stack.len() > 1 {
                for a in 0..d {
                    jet.grad[c][a] = sample(&self.stack[1], c * d + a);
                }
            }
            if order >= 2 && self.stack.len() > 2 {
                for a in 0..d {
                    for b in 0..d {
                        jet.hess[c][a][b] = sample(&self.stack[2], (c * d + a) * d + b);
                    }
                }
            }
        }
        jet
    }
}

fn check_localisation(w: &SamplePath, support_radius: f64, half_width: f64) -> Result<()> {
    let reach = w.sup_norm() + support_radius;
    if reach >= half_width {
        return Err(Error::Localisation(alloc::format!(
            "path sup {:.4} + support {:.4} reaches the box edge {:.4}",
            w.sup_norm(),
            support_radius,
            half_width
        )));
    }
    Ok(())
}

/// Spectral route rendered on `grid`, every `stride`-th time node.
pub fn average_spectral(b: &SpectralDrift, w: &SamplePath, stride: usize, grid: &SpaceGrid) -> Result<AveragedField> {
    SpectralAverage::new(b, w, stride)?.to_field(grid)
}

/// Grid route for a time-dependent drift on the path's time grid: trapezoid
/// in time of slices shifted by `w_t` through cubic interpolation.
pub fn average_grid(b: &SpaceTimeField, w: &SamplePath, stride: usize) -> Result<AveragedField> {
    if b.tgrid.len() != w.len() {
        return Err(invalid("drift and path must share the time grid"));
    }
    average_grid_with(b.sgrid, b.components, w, stride, |k, c| b.slice(k, c))
}

/// Grid route for a time-independent drift given by its components.
pub fn average_grid_static(b: &[ScalarField], w: &SamplePath, stride: usize) -> Result<AveragedField> {
    if b.is_empty() {
        return Err(invalid("drift needs at least one component"));
    }
    average_grid_with(b[0].grid, b.len(), w, stride, |_, c| &b[c].values)
}

fn average_grid_with<'a>(
    sgrid: SpaceGrid,
    components: usize,
    w: &SamplePath,
    stride: usize,
    slice: impl Fn(usize, usize) -> &'a [f64],
) -> Result<AveragedField> {
    if w.dim != sgrid.dim() {
        return Err(invalid("path dimension differs from the space dimension"));
    }
    if w.sup_norm() >= sgrid.half_width() {
        return Err(Error::Localisation(alloc::format!(
            "path sup {:.4} leaves the box of half-width {:.4}",
            w.sup_norm(),
            sgrid.half_width()
        )));
    }
    let out_grid = w.tgrid.coarsen(stride)?;
    let n = w.tgrid.intervals();
    let dt = w.tgrid.step();
    let size = sgrid.size();
    let d = sgrid.dim();
    let mut out = SpaceTimeField::zeros(out_grid, sgrid, components);
    let shifted = |k: usize, c: usize, buf: &mut Vec<f64>| {
        let shift = w.point(k);
        let vals = slice(k, c);
        buf.clear();
        for idx in 0..size {
            let p = sgrid.point(idx);
            let x = [p[0] + shift[0], if d == 2 { p[1] + shift[1] } else { 0.0 }];
            buf.push(interpolate(&sgrid, vals, &x[..d]));
        }
    };
    let mut acc = vec![vec![0.0; size]; components];
    let mut prev = vec![Vec::with_capacity(size); components];
    let mut next = Vec::with_capacity(size);
    for (c, p) in prev.iter_mut().enumerate() {
        shifted(0, c, p);
    }
    for i in 0..n {
        for c in 0..components {
            shifted(i + 1, c, &mut next);
            for ((a, p), q) in acc[c].iter_mut().zip(&prev[c]).zip(&next) {
                *a += 0.5 * dt * (p + q);
            }
            core::mem::swap(&mut prev[c], &mut next);
        }
        if (i + 1) % stride == 0 {
            let k = (i + 1) / stride;
            for (c, a) in acc.iter().enumerate() {
                out.slice_mut(k, c).copy_from_slice(a);
            }
        }
    }
    Ok(AveragedField::with_difference_stack(out, 3))
}

/// Hölder exponent of `t ↦ f(t, ·)` in sup norm: regression of the mean sup
/// increment at dyadic lags (one output step up to an eighth of the grid).
pub fn estimate_time_exponent(f: &SpaceTimeField) -> Result<RegularityEstimate> {
    let n = f.tgrid.intervals();
    if f.tgrid.len() < 64 {
        return Err(Error::TooFewScales { got: f.tgrid.len(), needed: 64 });
    }
    let dt = f.tgrid.step();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1usize;
    let mut level = 0;
    while lag <= n / 8 {
        let mut total = 0.0;
        for i in 0..=n - lag {
            let mut sup: f64 = 0.0;
            for c in 0..f.components {
                for (a, b) in f.slice(i + lag, c).iter().zip(f.slice(i, c)) {
                    sup = sup.max(fabs(a - b));
                }
            }
            total += sup;
        }
        let mean = total / (n + 1 - lag) as f64;
        if mean > 0.0 {
            xs.push(log2(lag as f64 * dt));
            ys.push(log2(mean));
        }
        lag *= 2;
        level += 1;
    }
    if xs.len() < MIN_SCALES {
        return Ok(RegularityEstimate::super_smooth((0, level - 1)));
    }
    let fit = linear_fit(&xs, &ys).ok_or_else(|| invalid("degenerate regression"))?;
    Ok(RegularityEstimate { exponent: fit.slope, intercept: fit.intercept, r2: fit.r2, scale_range: (0, level - 1) })
}

// ---------------------------------------------------------------------------
// Commutation with derivatives and convolutions

/// Sup-norm deviations `‖∂T^w b − T^w ∂b‖` and `‖K*T^w b − T^w(K*b)‖`, maxed
/// over output times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutationReport {
    pub derivative: f64,
    pub convolution: f64,
}

/// Circular convolution `(K*f)(x) = Σ_y K(y) f(x - y) h^d` on the periodic
/// grid; the probe is centred at the box midpoint.
fn circular_convolution(probe: &ScalarField, values: &[f64]) -> Vec<f64> {
    let g = probe.grid;
    let m = g.points();
    let h = g.spacing();
    let mid = m / 2;
    let mut out = vec![0.0; m];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, kv) in probe.values.iter().enumerate() {
            if *kv == 0.0 {
                continue;
            }
            let src = (i + m + mid - j) % m;
            acc += kv * values[src];
        }
        *o = acc * h;
    }
    out
}

/// Spectral route: derivative via `(iξ)` and convolution via the probe's
/// discrete Fourier multiplier, compared mode-wise against grid operations.
pub fn check_commutation_spectral(
    b: &SpectralDrift,
    w: &SamplePath,
    probe: &ScalarField,
    stride: usize,
) -> Result<CommutationReport> {
    let grid = probe.grid;
    let avg = SpectralAverage::new(b, w, stride)?;
    let avg_db = SpectralAverage::new(&b.derivative(1), w, stride)?;
    // Probe multiplier on the box modes, matching `circular_convolution`.
    let m = grid.points();
    let mut buf: Vec<C64> = probe.values.iter().map(|v| C64::new(*v, 0.0)).collect();
    fft::forward(&mut buf)?;
    let h = grid.spacing();
    let kb = b.multiplied(|xi| {
        let k = libm::round(xi * b.half_width / PI) as usize;
        buf[k % m] * (h * alternating(k))
    });
    let avg_kb = SpectralAverage::new(&kb, w, stride)?;
    let mut report = CommutationReport { derivative: 0.0, convolution: 0.0 };
    for k in 0..avg.phases.out_grid.len() {
        let lhs_d = avg.render(k, &grid, 1)?;
        let rhs_d = avg_db.render(k, &grid, 0)?;
        report.derivative = report.derivative.max(lhs_d.sub(&rhs_d).sup_norm());
        let field = avg.render(k, &grid, 0)?;
        let lhs_c = circular_convolution(probe, &field.values);
        let rhs_c = avg_kb.render(k, &grid, 0)?;
        let dev = lhs_c.iter().zip(&rhs_c.values).fold(0.0f64, |m, (a, b)| m.max(fabs(a - b)));
        report.convolution = report.convolution.max(dev);
    }
    Ok(report)
}

/// Grid route for a one-component time-independent drift: central
/// differences and circular convolution on both sides.
pub fn check_commutation_grid(
    b: &ScalarField,
    w: &SamplePath,
    probe: &ScalarField,
    stride: usize,
) -> Result<CommutationReport> {
    let avg = average_grid_static(core::slice::from_ref(b), w, stride)?;
    let db = b.derivative(0);
    let avg_db = average_grid_static(core::slice::from_ref(&db), w, stride)?;
    let kb = ScalarField::new(b.grid, circular_convolution(probe, &b.values))?;
    let avg_kb = average_grid_static(core::slice::from_ref(&kb), w, stride)?;
    let f = avg.field();
    let mut report = CommutationReport { derivative: 0.0, convolution: 0.0 };
    // Deviations are measured away from the box edge, where the truncated
    // stencils of both sides differ.
    let m = b.grid.points();
    let interior = |i: usize| i >= 4 && i + 4 < m;
    for k in 0..f.tgrid.len() {
        let d1 = avg.stack[1].slice(k, 0);
        let d2 = avg_db.field().slice(k, 0);
        let c1 = circular_convolution(probe, f.slice(k, 0));
        let c2 = avg_kb.field().slice(k, 0);
        for i in (0..m).filter(|i| interior(*i)) {
            report.derivative = report.derivative.max(fabs(d1[i] - d2[i]));
            report.convolution = report.convolution.max(fabs(c1[i] - c2[i]));
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Itô–Tanaka decomposition

/// Discretisation of the Itô–Tanaka terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ItoScheme {
    /// Heat kernel variance `c̃_H |r - u|^{2H}`, kernel `(r - u)^{H-1/2}` by
    /// product integration, Euler in `dB_u`.
    Continuum,
    /// Exact conditional variances of the discretised Volterra process and
    /// the cell-averaged kernel, Euler in `dB_u`.
    Discrete,
    /// `Discrete` plus the second-order `(dB_u² - Δ)` term of the conditional
    /// expectation increments. Converges fastest; the default.
    #[default]
    DiscreteMilstein,
}

/// `T^W b_{s,t}` and the two terms of its Itô–Tanaka decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoTanakaTerms {
    pub lhs: ScalarField,
    pub i1: ScalarField,
    pub i2: ScalarField,
    /// `‖lhs − (i1 + i2)‖_{L²} / ‖lhs‖_{L²}`.
    pub relative_deviation: f64,
}

/// Itô–Tanaka decomposition of `T^W b_{s,t} = ∫_s^t b(· + W_r) dr` along the
/// raw Volterra fBm of `driver`, between forward nodes `a < b`:
///
/// * `I1 = ∫_s^t P_{v(r-s)} b(· + W²_{s,r}) dr` (trapezoid in `r`),
/// * `I2 = c_H Σ_u dB_u ∫_u^t P_{v(r-u)} ∇b(· + W²_{u,r}) (r-u)^{H-1/2} dr`,
///   left-point in `u` (see [`ItoScheme`] for the inner quadrature),
///
/// with `W²_{u,r} = W_r − w1(u, r)` the past-measurable part. Each term acts
/// mode-wise. The left-hand side uses the trapezoid rule on the nodes, like
/// the nodal identity that `I1 + I2` discretises.
pub fn ito_tanaka(
    b: &SpectralDrift,
    driver: &VolterraDriver,
    a: usize,
    end: usize,
    grid: &SpaceGrid,
    scheme: ItoScheme,
) -> Result<ItoTanakaTerms> {
    if driver.driver().dim != 1 {
        return Err(invalid("Itô–Tanaka needs a scalar driver"));
    }
    if a >= end || end > driver.forward_intervals() {
        return Err(invalid("need 0 ≤ s < t within the driver"));
    }
    let tg = driver.driver().tgrid;
    let back = -tg.t0();
    let horizon = tg.node(driver.zero_index() + end);
    if back < MIN_BACK_RATIO * horizon {
        return Err(Error::TruncationTooSmall { back, horizon });
    }
    let params = *driver.params();
    let hurst = params.hurst;
    let dt = tg.step();
    let len = end - a;
    let modes = b.modes();
    let xi1 = PI / b.half_width;

    // Left-hand side by the trapezoid rule on the nodes, the same time
    // quadrature as the nodal identity behind I1 + I2.
    let raw: Vec<f64> = (a..=end).map(|k| driver.raw(k, 0)).collect();
    let mut lhs_c = vec![C64::default(); modes + 1];
    for (r, w) in raw.iter().enumerate() {
        let trap = if r == 0 || r == len { 0.5 * dt } else { dt };
        let e1 = cis(xi1 * w);
        let mut e = C64::new(1.0, 0.0);
        for (k, acc) in lhs_c.iter_mut().enumerate() {
            if k > 0 {
                e *= e1;
            }
            *acc += e * trap;
        }
    }
    for (acc, c) in lhs_c.iter_mut().zip(&b.coeffs) {
        *acc *= *c;
    }

    // Conditional variances per lag.
    let discrete = scheme != ItoScheme::Continuum;
    let var: Vec<f64> = (0..=len)
        .map(|d| {
            if !discrete {
                params.c_tilde * pow(d as f64 * dt, 2.0 * hurst)
            } else if d == 0 {
                0.0
            } else {
                driver.discrete_conditional_variance(d)
            }
        })
        .collect();

    // Weights of node u + d (+1) in the inner integral over the cell at lag
    // d: left node and right node. `wl2`/`wr2` carry the squared kernel of
    // the second-order term.
    let p = hurst - 0.5;
    let omega = driver.weights();
    let mut wl = vec![0.0; len];
    let mut wr = vec![0.0; len];
    let mut wl2 = vec![0.0; len];
    let mut wr2 = vec![0.0; len];
    for d in 0..len {
        if discrete {
            // Kernel at node u + d + 1 is the cell average ω[d]; trapezoid in r.
            wr[d] = 0.5 * dt * omega[d];
            wl[d] = if d == 0 { 0.0 } else { 0.5 * dt * omega[d - 1] };
            wr2[d] = 0.5 * dt * omega[d] * omega[d];
            wl2[d] = if d == 0 { 0.0 } else { 0.5 * dt * omega[d - 1] * omega[d - 1] };
            continue;
        }
        // Product integration of (r-u)^p against the linear hat basis.
        let df = d as f64;
        let m0 = (pow(df + 1.0, p + 1.0) - pow(df, p + 1.0)) * pow(dt, p + 1.0) / (p + 1.0);
        let m1 = (pow(df + 1.0, p + 2.0) - pow(df, p + 2.0)) * pow(dt, p + 2.0) / (p + 2.0);
        let right = (m1 - df * dt * m0) / dt;
        wr[d] = right;
        wl[d] = m0 - right;
    }
    let milstein = scheme == ItoScheme::DiscreteMilstein;

    // Past-measurable parts W²_{u,r} for a ≤ u ≤ r ≤ end, row u.
    let zero = driver.zero_index();
    let stride = len + 1;
    let mut w2 = vec![0.0; stride * stride];
    for r in 0..=len {
        let mut w1 = 0.0;
        w2[r * stride + r] = raw[r];
        for u in (0..r).rev() {
            w1 += omega[r - 1 - u] * driver.increment(zero + a + u, 0);
            w2[u * stride + r] = raw[r] - params.c_h * w1;
        }
    }

    let mut i1_c = vec![C64::default(); modes + 1];
    let mut i2_c = vec![C64::default(); modes + 1];
    let mut i2_second = vec![C64::default(); modes + 1];
    let mut inner = vec![C64::default(); modes + 1];
    let mut inner2 = vec![C64::default(); modes + 1];
    for u in 0..len {
        let db = driver.increment(zero + a + u, 0);
        inner.iter_mut().chain(inner2.iter_mut()).for_each(|v| *v = C64::default());
        // Row u = 0 also carries I1 (trapezoid in r, variance from s).
        let rows = if u == 0 { 2 } else { 1 };
        for row in 0..rows {
            let first = row == 1;
            for r in u..=len {
                let d = r - u;
                let (weight, weight2, lag) = if first {
                    (if r == 0 || r == len { 0.5 * dt } else { dt }, 0.0, d)
                } else {
                    if d == 0 {
                        continue;
                    }
                    let mut w = wr[d - 1];
                    let mut w2s = wr2[d - 1];
                    if r < len {
                        w += wl[d];
                        w2s += wl2[d];
                    }
                    // The increment over cell u is expanded around the
                    // conditional law given the next node.
                    (w, w2s, if milstein { d - 1 } else { d })
                };
                let e1 = cis(xi1 * w2[u * stride + r]);
                let g1 = exp(-0.5 * xi1 * xi1 * var[lag]);
                // e^{-ξ_k² v/2} = g1^{k²}: advance by g1^{2k-1}.
                let g2 = g1 * g1;
                let mut gk = 1.0;
                let mut gstep = g1;
                let mut e = C64::new(1.0, 0.0);
                for k in 0..=modes {
                    if k > 0 {
                        e *= e1;
                        gk *= gstep;
                        gstep *= g2;
                    }
                    let term = e * gk;
                    if first {
                        i1_c[k] += term * weight;
                    } else {
                        inner[k] += term * weight;
                        if milstein {
                            inner2[k] += term * weight2;
                        }
                    }
                }
            }
        }
        let q = db * db - dt;
        for k in 0..=modes {
            i2_c[k] += inner[k] * db;
            i2_second[k] += inner2[k] * q;
        }
    }
    for k in 0..=modes {
        let xi = xi1 * k as f64;
        i1_c[k] *= b.coeffs[k];
        i2_c[k] = b.coeffs[k]
            * (i2_c[k] * i_xi_pow(xi, 1) * params.c_h - i2_second[k] * (0.5 * xi * xi * params.c_h * params.c_h));
    }
    let lhs = ScalarField::new(*grid, render_modes(b.half_width, &lhs_c, grid)?)?;
    let i1 = ScalarField::new(*grid, render_modes(b.half_width, &i1_c, grid)?)?;
    let i2 = ScalarField::new(*grid, render_modes(b.half_width, &i2_c, grid)?)?;
    let diff: Vec<C64> = (0..=modes).map(|k| lhs_c[k] - i1_c[k] - i2_c[k]).collect();
    let denom = modes_l2(b.half_width, &lhs_c);
    let relative_deviation = if denom > 0.0 { modes_l2(b.half_width, &diff) / denom } else { 0.0 };
    Ok(ItoTanakaTerms { lhs, i1, i2, relative_deviation })
}

// ---------------------------------------------------------------------------
// Thresholds

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdInputs {
    /// `(s, δ, α_time, p, d)`.
    Besov { s: f64, delta: f64, alpha_time: f64, p: f64, d: f64 },
    /// `(α, n)`.
    Flow { alpha: f64, n: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub inputs: ThresholdInputs,
    pub bound: f64,
    /// The bound is a strict inequality.
    pub strict: bool,
}

/// `s + (1/δ)(1/2 − 1/α_time) − d/p`; `δ = 0` gives `+∞`.
pub fn threshold_beta(s: f64, delta: f64, alpha_time: f64, p: f64, d: f64) -> Result<ThresholdReport> {
    if !(delta >= 0.0 && delta < 1.0) {
        return Err(invalid("δ must lie in [0, 1)"));
    }
    if !(alpha_time > 2.0) || !(p >= 2.0) {
        return Err(invalid("need α_time > 2 and p ≥ 2"));
    }
    let bound = if delta == 0.0 { f64::INFINITY } else { s + (0.5 - 1.0 / alpha_time) / delta - d / p };
    Ok(ThresholdReport { inputs: ThresholdInputs::Besov { s, delta, alpha_time, p, d }, bound, strict: true })
}

/// Largest admissible `δ` for a drift in `B^α` and `n`-th order flow
/// regularity: `1/(2n − 2α)`.
pub fn threshold_flow(alpha: f64, n: u32) -> Result<ThresholdReport> {
    if !(alpha < 1.0) || n < 1 {
        return Err(invalid("need α < 1 and n ≥ 1"));
    }
    let denom = 2.0 * n as f64 - 2.0 * alpha;
    if !(denom > 0.0) {
        return Err(invalid("n ≤ α gives a nonpositive threshold"));
    }
    Ok(ThresholdReport { inputs: ThresholdInputs::Flow { alpha, n: n as f64 }, bound: 1.0 / denom, strict: true })
}

// ---------------------------------------------------------------------------
// Regularity gain experiment

/// Discretisation of one gain replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainResolution {
    /// Space points of the measurement grid (power of two).
    pub space_points: usize,
    /// First Littlewood–Paley block of the regression.
    pub j_min: i32,
    /// Number of blocks in the regression (at least four).
    pub blocks: i32,
    /// Correlation time `τ` at the peak frequency of block `j_min`: the box is
    /// sized so that `ξ_low^{-1/H} = τ`, putting the regression in the
    /// asymptotic regime `ξ T^H ≫ 1`.
    pub correlation_time: f64,
    /// Bound on `ξ_top Δt^H` at the peak of the top block.
    pub phase_resolution: f64,
    /// Fixed number of time steps; `None` derives it from `phase_resolution`.
    pub time_steps: Option<usize>,
    pub max_time_steps: usize,
    /// Output times for the time-exponent estimate.
    pub time_samples: usize,
    /// Calibrate the drift so its measured block exponent equals `α`.
    pub calibrate_drift: bool,
}

impl Default for GainResolution {
    fn default() -> Self {
        Self {
            space_points: 1024,
            j_min: 3,
            blocks: 4,
            correlation_time: 1.0 / 16.0,
            phase_resolution: 0.5,
            time_steps: None,
            max_time_steps: crate::gaussian::MAX_EXACT_INTERVALS,
            time_samples: 128,
            calibrate_drift: true,
        }
    }
}

/// Measured exponents of one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSample {
    pub seed: u64,
    /// `None` for the zero-path control.
    pub hurst: Option<f64>,
    pub alpha_drift: f64,
    /// Exponent of the drift itself over the same blocks.
    pub alpha_measured: f64,
    pub beta_measured: f64,
    pub gamma_measured: f64,
    pub beta_predicted: f64,
    pub r2: f64,
    pub time_steps: usize,
    /// The phase-resolution target could not be met within `max_time_steps`.
    pub under_resolved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub samples: Vec<GainSample>,
    pub beta_median: f64,
    pub gamma_median: f64,
    pub beta_predicted: f64,
}

/// `α + 1/(2H) − ε`, or `α` for the zero path.
pub fn predicted_gain_exponent(alpha: f64, hurst: Option<f64>) -> f64 {
    match hurst {
        Some(h) => alpha + 1.0 / (2.0 * h) - EPSILON_MARGIN,
        None => alpha,
    }
}

fn block_sup_norms(f: &ScalarField) -> Result<Vec<f64>> {
    Ok(littlewood_paley_blocks(f)?.iter().map(|b| b.sup_norm()).collect())
}

/// One replica: synthesise a time-independent drift, average it along fBm on
/// `[0, 1]` (or the zero path) and measure spatial and time exponents.
pub fn gain_replica(alpha: f64, hurst: Option<f64>, seed: u64, res: &GainResolution) -> Result<GainSample> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(invalid("drift regularity must lie in [-1, 1]"));
    }
    if let Some(h) = hurst {
        if !(0.1..=0.8).contains(&h) {
            return Err(invalid("H must lie in [0.1, 0.8]"));
        }
    }
    if res.blocks < MIN_SCALES as i32 || res.j_min < 0 {
        return Err(Error::TooFewScales { got: res.blocks.max(0) as usize, needed: MIN_SCALES });
    }
    let j_max = res.j_min + res.blocks - 1;
    let m = res.space_points;
    if !crate::math::is_power_of_two(m) || j_max > finest_block(m) - 2 {
        return Err(Error::TooFewScales {
            got: (finest_block(m) - 1 - res.j_min).max(0) as usize,
            needed: res.blocks as usize,
        });
    }
    let h_eff = hurst.unwrap_or(0.5);
    let xi_low = pow(res.correlation_time, -h_eff);
    let half_width = PI * pow(2.0, (res.j_min + 1) as f64) / xi_low;
    let k_modes = (1usize << (j_max + 2)).max(16);
    let support = half_width / 3.0;
    let mut drift = synthesize_drift(alpha, k_modes, support, half_width, seed)?;
    if res.calibrate_drift {
        calibrate_block_exponent(&mut drift, alpha, res.j_min, j_max)?;
    }
    if drift.modes() >= m / 2 {
        return Err(Error::TooFewScales { got: m, needed: 2 * drift.modes() + 2 });
    }
    let grid = SpaceGrid::new(half_width, m, 1)?;

    let xi_top = PI * pow(2.0, (j_max + 1) as f64) / half_width;
    let wanted = match res.time_steps {
        Some(n) => n,
        None => {
            let dt = pow(res.phase_resolution / xi_top, 1.0 / h_eff);
            (libm::ceil(1.0 / dt) as usize).next_power_of_two().max(res.time_samples * 2)
        }
    };
    let under_resolved = wanted > res.max_time_steps;
    let n = wanted.min(res.max_time_steps);
    let tgrid = TimeGrid::unit(1.0, n)?;
    let path = match hurst {
        Some(h) => sample_fbm_exact(h, tgrid, seed, 1)?,
        None => SamplePath::from_fn(tgrid, 1, |_, out| out[0] = 0.0),
    };
    let stride = (n / res.time_samples.max(1)).max(1);
    let avg = SpectralAverage::new(&drift, &path, stride)?;

    let last = avg.phases.out_grid.len() - 1;
    let field = avg.render(last, &grid, 0)?;
    let est = estimate_regularity_from_block_norms(&block_sup_norms(&field)?, res.j_min, j_max)?;
    let alpha_est =
        estimate_regularity_from_block_norms(&block_sup_norms(&drift.render(&grid, 0)?)?, res.j_min, j_max)?;
    let mut st = SpaceTimeField::zeros(avg.phases.out_grid, grid, 1);
    for k in 0..avg.phases.out_grid.len() {
        st.slice_mut(k, 0).copy_from_slice(&avg.render(k, &grid, 0)?.values);
    }
    let gamma = estimate_time_exponent(&st)?;
    Ok(GainSample {
        seed,
        hurst,
        alpha_drift: alpha,
        alpha_measured: alpha_est.exponent,
        beta_measured: est.exponent,
        gamma_measured: gamma.exponent,
        beta_predicted: predicted_gain_exponent(alpha, hurst),
        r2: est.r2,
        time_steps: n,
        under_resolved,
    })
}

/// Replicas over `seeds` with medians of the measured exponents.
pub fn regularity_gain_experiment(
    alpha: f64,
    hurst: Option<f64>,
    seeds: &[u64],
    res: &GainResolution,
) -> Result<GainReport> {
    let samples = seeds.iter().map(|s| gain_replica(alpha, hurst, *s, res)).collect::<Result<Vec<_>>>()?;
    Ok(summarize_gain(alpha, hurst, samples))
}

/// Medians of a set of replicas (callers may compute replicas in parallel).
pub fn summarize_gain(alpha: f64, hurst: Option<f64>, samples: Vec<GainSample>) -> GainReport {
    let betas: Vec<f64> = samples.iter().map(|s| s.beta_measured).collect();
    let gammas: Vec<f64> = samples.iter().map(|s| s.gamma_measured).collect();
    GainReport {
        beta_median: median(&betas),
        gamma_median: median(&gammas),
        beta_predicted: predicted_gain_exponent(alpha, hurst),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::sample_two_sided_bm;

    fn ramp(v: f64, n: usize) -> SamplePath {
        SamplePath::from_fn(TimeGrid::unit(1.0, n).unwrap(), 1, |t, out| out[0] = v * t)
    }

    fn smooth_drift(half_width: f64) -> SpectralDrift {
        let g = SpaceGrid::new(half_width, 256, 1).unwrap();
        let f = ScalarField::from_fn(g, |x| libm::exp(-x[0] * x[0]) * libm::cos(2.0 * x[0]));
        let mut d = SpectralDrift::from_field(&f, 40).unwrap();
        d.support_radius = 3.0;
        d
    }

    #[test]
    fn render_matches_pointwise_evaluation() {
        let d = synthesize_drift(0.5, 16, 2.0, 6.0, 3).unwrap();
        let g = SpaceGrid::new(6.0, 1024, 1).unwrap();
        let f = d.render(&g, 1).unwrap();
        for i in (0..1024).step_by(97) {
            assert!((f.values[i] - d.eval(g.coord(i), 1)).abs() < 1e-9 * (1.0 + f.sup_norm()));
        }
    }

    #[test]
    fn synthesized_drift_is_windowed() {
        let d = synthesize_drift(0.5, 32, 2.0, 8.0, 11).unwrap();
        let g = SpaceGrid::new(8.0, 2048, 1).unwrap();
        let f = d.render(&g, 0).unwrap();
        let outside = (0..2048).filter(|i| g.coord(*i).abs() > 2.2).map(|i| f.values[i].abs()).fold(0.0, f64::max);
        assert!(outside < 1e-3 * f.sup_norm(), "leak {outside}");
    }

    #[test]
    fn doubling_coefficients_doubles_besov_norms() {
        let d = synthesize_drift(0.5, 16, 2.0, 6.0, 1).unwrap();
        let g = SpaceGrid::new(6.0, 256, 1).unwrap();
        let n1 = crate::gridcore::besov_norm(&d.render(&g, 0).unwrap(), 0.5, f64::INFINITY, f64::INFINITY).unwrap();
        let n2 = crate::gridcore::besov_norm(&d.scaled(2.0).render(&g, 0).unwrap(), 0.5, f64::INFINITY, f64::INFINITY)
            .unwrap();
        assert!((n2 - 2.0 * n1).abs() < 1e-12 * n1);
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let d = SpectralDrift::from_coeffs(4.0, vec![C64::default(); 20]).unwrap();
        let g = SpaceGrid::new(4.0, 64, 1).unwrap();
        assert_eq!(d.render(&g, 0).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn phase_integral_of_a_ramp_is_closed_form() {
        let v = 0.7;
        let w = ramp(v, 1000);
        let l = 5.0;
        let t = phase_integrals(PI / l, 8, &w, 10).unwrap();
        let xi = 3.0 * PI / l;
        let exact = (cis(xi * v) - 1.0) / C64::new(0.0, xi * v);
        assert!((t.get(t.out_grid.len() - 1, 3) - exact).norm() < 1e-12);
        // Zero path: Φ = t.
        let z = ramp(0.0, 64);
        let t0 = phase_integrals(1.0, 4, &z, 8).unwrap();
        assert!((t0.get(4, 3).re - 0.5).abs() < 1e-14 && t0.get(4, 3).im.abs() < 1e-14);
    }

    #[test]
    fn constant_drift_averages_to_t_times_constant() {
        let d = SpectralDrift::from_coeffs(4.0, vec![C64::new(1.5, 0.0)]).unwrap();
        let w = sample_fbm_exact(0.3, TimeGrid::unit(1.0, 256).unwrap(), 5, 1).unwrap();
        let g = SpaceGrid::new(4.0, 32, 1).unwrap();
        let a = average_spectral(&SpectralDrift { support_radius: 1.0, ..d }, &w, 64, &g).unwrap();
        for k in 0..a.field().tgrid.len() {
            let t = a.field().tgrid.node(k);
            assert!(a.field().slice(k, 0).iter().all(|v| (v - 1.5 * t).abs() < 1e-12));
        }
    }

    #[test]
    fn localisation_is_enforced() {
        let d = smooth_drift(4.0);
        let w = ramp(2.0, 16);
        assert!(matches!(SpectralAverage::new(&d, &w, 1), Err(Error::Localisation(_))));
    }

    #[test]
    fn grid_and_spectral_routes_agree() {
        let l = 8.0;
        let g = SpaceGrid::new(l, 512, 1).unwrap();
        let f = ScalarField::from_fn(g, |x| libm::exp(-x[0] * x[0] / 2.0));
        let mut d = SpectralDrift::from_field(&f, 60).unwrap();
        d.support_radius = 5.0;
        let w = sample_fbm_exact(0.75, TimeGrid::unit(1.0, 2048).unwrap(), 2, 1).unwrap();
        let spec = average_spectral(&d, &w, 256, &g).unwrap();
        let grid = average_grid_static(&[d.render(&g, 0).unwrap()], &w, 256).unwrap();
        let mut dev: f64 = 0.0;
        for k in 0..spec.field().tgrid.len() {
            for (a, b) in spec.field().slice(k, 0).iter().zip(grid.field().slice(k, 0)) {
                dev = dev.max((a - b).abs());
            }
        }
        assert!(dev < 1e-4, "dual-route deviation {dev}");
        // Zero at t = 0.
        assert!(grid.field().slice(0, 0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn space_constant_time_dependent_drift() {
        let tg = TimeGrid::unit(1.0, 128).unwrap();
        let g = SpaceGrid::new(4.0, 64, 1).unwrap();
        let b = SpaceTimeField::from_fn(tg, g, 1, |t, _, out| out[0] = 1.0 + t);
        let w = sample_fbm_exact(0.5, tg, 1, 1).unwrap();
        let a = average_grid(&b, &w, 16).unwrap();
        // Interior nodes see the full shifted stencil.
        let t = 1.0;
        let v = a.field().slice(8, 0)[32];
        assert!((v - (t + 0.5 * t * t)).abs() < 1e-12);
    }

    #[test]
    fn spectral_commutation_is_exact() {
        let d = smooth_drift(8.0);
        let g = SpaceGrid::new(8.0, 256, 1).unwrap();
        let probe = ScalarField::from_fn(g, |x| libm::exp(-4.0 * x[0] * x[0]));
        let w = sample_fbm_exact(0.4, TimeGrid::unit(1.0, 512).unwrap(), 8, 1).unwrap();
        let r = check_commutation_spectral(&d, &w, &probe, 64).unwrap();
        assert!(r.derivative < 1e-10 && r.convolution < 1e-10, "{r:?}");
        let zero = SpectralDrift::from_coeffs(8.0, vec![C64::default(); 8]).unwrap();
        let r0 = check_commutation_spectral(&SpectralDrift { support_radius: 1.0, ..zero }, &w, &probe, 64).unwrap();
        assert_eq!(r0.derivative, 0.0);
        assert_eq!(r0.convolution, 0.0);
    }

    #[test]
    fn grid_commutation_within_tolerance() {
        let g = SpaceGrid::new(8.0, 512, 1).unwrap();
        let b = ScalarField::from_fn(g, |x| libm::exp(-x[0] * x[0] / 2.0));
        let probe = ScalarField::from_fn(g, |x| libm::exp(-4.0 * x[0] * x[0]));
        let w = sample_fbm_exact(0.75, TimeGrid::unit(1.0, 1024).unwrap(), 8, 1).unwrap();
        let r = check_commutation_grid(&b, &w, &probe, 128).unwrap();
        assert!(r.derivative < 1e-4 && r.convolution < 1e-4, "{r:?}");
    }

    #[test]
    fn linearity_and_mollification_exchange() {
        let l = 8.0;
        let d1 = synthesize_drift(0.5, 16, 3.0, l, 1).unwrap();
        let d2 = synthesize_drift(-0.5, 16, 3.0, l, 2).unwrap();
        let w = sample_fbm_exact(0.5, TimeGrid::unit(1.0, 256).unwrap(), 3, 1).unwrap();
        let g = SpaceGrid::new(l, 512, 1).unwrap();
        let combo = d1.scaled(2.0).add(&d2).unwrap();
        let a = SpectralAverage::new(&combo, &w, 256).unwrap();
        let a1 = SpectralAverage::new(&d1, &w, 256).unwrap();
        let a2 = SpectralAverage::new(&d2, &w, 256).unwrap();
        let lhs = a.render(1, &g, 0).unwrap();
        let rhs1 = a1.render(1, &g, 0).unwrap().scaled(2.0);
        let rhs2 = a2.render(1, &g, 0).unwrap();
        for i in 0..512 {
            assert!((lhs.values[i] - rhs1.values[i] - rhs2.values[i]).abs() < 1e-12);
        }
        // ρ^ε * T^w b = T^w (ρ^ε * b) mode-wise.
        let m = SpectralAverage::new(&d1.mollified(0.5), &w, 256).unwrap();
        let lhs = m.coeffs_at(1);
        let rhs: Vec<C64> = a1
            .coeffs_at(1)
            .iter()
            .enumerate()
            .map(|(k, c)| *c * Mollifier::fourier_factor_1d(0.5, d1.frequency(k)))
            .collect();
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn translation_covariance_between_routes() {
        // Averaging b along w + φ equals averaging b(· + φ_t) along w.
        let l = 8.0;
        let g = SpaceGrid::new(l, 512, 1).unwrap();
        let tg = TimeGrid::unit(1.0, 1024).unwrap();
        let w = sample_fbm_exact(0.7, tg, 4, 1).unwrap();
        let phi = |t: f64| 0.5 * libm::sin(3.0 * t);
        let shifted_path = SamplePath::from_fn(tg, 1, |t, out| out[0] = 0.0 + phi(t));
        let mut wp = w.clone();
        for (k, v) in wp.values.iter_mut().enumerate() {
            *v += shifted_path.values[k];
        }
        let bump = |x: f64| libm::exp(-x * x / 2.0);
        let b = ScalarField::from_fn(g, |x| bump(x[0]));
        let mut d = SpectralDrift::from_field(&b, 60).unwrap();
        d.support_radius = 4.0;
        let lhs = average_spectral(&d, &wp, 128, &g).unwrap();
        let bt = SpaceTimeField::from_fn(tg, g, 1, |t, x, out| out[0] = d.eval(x[0] + phi(t), 0));
        let rhs = average_grid(&bt, &w, 128).unwrap();
        let mut dev: f64 = 0.0;
        for k in 0..lhs.field().tgrid.len() {
            for (a, b) in lhs.field().slice(k, 0).iter().zip(rhs.field().slice(k, 0)) {
                dev = dev.max((a - b).abs());
            }
        }
        assert!(dev < 1e-4, "{dev}");
    }

    #[test]
    fn thresholds() {
        let r = threshold_beta(0.0, 0.25, 4.0, 2.0, 1.0).unwrap();
        assert!((r.bound - 0.5).abs() < 1e-15);
        assert!(threshold_beta(0.0, 0.0, 4.0, 2.0, 1.0).unwrap().bound.is_infinite());
        let r1 = threshold_beta(1.0, 0.25, 4.0, 2.0, 1.0).unwrap();
        assert!((r1.bound - r.bound - 1.0).abs() < 1e-15);
        assert_eq!(threshold_flow(0.0, 1).unwrap().bound, 0.5);
        assert_eq!(threshold_flow(0.0, 2).unwrap().bound, 0.25);
        assert_eq!(threshold_flow(-1.0, 1).unwrap().bound, 0.25);
        assert!(threshold_flow(1.0, 1).is_err());
    }

    #[test]
    fn ito_tanaka_zero_drift_and_empty_interval() {
        let tg = TimeGrid::new(-10.0, 1.0, 1100).unwrap();
        let bm = sample_two_sided_bm(4, tg, 1).unwrap();
        let vd = VolterraDriver::new(0.3, bm).unwrap();
        let zero = SpectralDrift::from_coeffs(8.0, vec![C64::default(); 8]).unwrap();
        let g = SpaceGrid::new(8.0, 64, 1).unwrap();
        let r = ito_tanaka(&zero, &vd, 10, 50, &g, ItoScheme::Continuum).unwrap();
        assert_eq!(r.i1.sup_norm(), 0.0);
        assert_eq!(r.i2.sup_norm(), 0.0);
        assert!(ito_tanaka(&zero, &vd, 50, 50, &g, ItoScheme::Continuum).is_err());
    }

    #[test]
    fn gain_control_recovers_drift_exponent() {
        let res = GainResolution { space_points: 1024, ..Default::default() };
        let s = gain_replica(0.5, None, 3, &res).unwrap();
        assert!((s.beta_measured - s.alpha_measured).abs() < 1e-9);
        assert!((s.alpha_measured - 0.5).abs() < 1e-3, "{s:?}");
        let raw = gain_replica(0.5, None, 3, &GainResolution { calibrate_drift: false, ..res }).unwrap();
        assert!((raw.alpha_measured - 0.5).abs() < 0.3, "{raw:?}");
    }

    #[test]
    fn calibration_fixes_the_block_exponent_and_keeps_the_support() {
        for seed in 0..4 {
            let mut d = synthesize_drift(0.3, 128, 1.0, 3.0, seed).unwrap();
            let got = calibrate_block_exponent(&mut d, 0.3, 2, 5).unwrap();
            assert!((got - 0.3).abs() < 1e-4, "seed {seed}: {got}");
            let g = SpaceGrid::new(3.0, 512, 1).unwrap();
            let f = d.render(&g, 0).unwrap();
            let peak = f.sup_norm();
            let outside = (0..512).filter(|&i| g.coord(i).abs() > 1.5).map(|i| f.values[i].abs()).fold(0.0, f64::max);
            assert!(outside < 0.05 * peak, "seed {seed}: {outside} vs {peak}");
        }
    }
}
