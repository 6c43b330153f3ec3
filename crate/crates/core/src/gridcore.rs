//! Uniform grids, gridded fields, mollification, the heat semigroup and
//! empirical Hölder/Besov regularity estimators.
//!
//! Spatial fields live on the box `[-L, L]^d` (`d ∈ {1, 2}`) with `m` points
//! per axis and spacing `h = 2L/m`; they are treated as zero outside the box.
//! Littlewood–Paley blocks use the periodic spectrum of the box with
//! raised-cosine dyadic annuli.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::gaussian::SamplePath;
use crate::math::{cos, exp, fabs, floor, is_power_of_two, log2, pow, sqrt, C64};
use crate::stats::linear_fit;

/// Uniform time grid `t_k = t0 + k (t1 - t0) / n`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
            return Err(invalid("time grid needs finite t0 < t1"));
        }
        if n == 0 {
            return Err(invalid("time grid needs at least one interval"));
        }
        Ok(Self { t0, t1, n })
    }

    /// `[0, horizon]` with `n` intervals.
    pub fn unit(horizon: f64, n: usize) -> Result<Self> {
        Self::new(0.0, horizon, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// Number of intervals.
    pub fn intervals(&self) -> usize {
        self.n
    }

    /// Number of nodes (`n + 1`).
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / self.n as f64
    }

    pub fn span(&self) -> f64 {
        self.t1 - self.t0
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        if k == self.n {
            self.t1
        } else {
            self.t0 + (self.t1 - self.t0) * k as f64 / self.n as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.node(k)).collect()
    }

    /// Index of the node equal to `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t - self.t0) / self.step();
        let r = floor(k + 0.5);
        if r < 0.0 || r > self.n as f64 {
            return None;
        }
        let idx = r as usize;
        let tol = 1e-9 * self.step();
        (fabs(self.node(idx) - t) <= tol).then_some(idx)
    }

    /// Index of the node at time zero.
    pub fn zero_index(&self) -> Result<usize> {
        self.index_of(0.0).ok_or(Error::NoNodeAtZero)
    }

    /// Dyadic refinement: same interval, twice the intervals.
    pub fn refine(&self) -> Self {
        Self { n: 2 * self.n, ..*self }
    }

    /// Keeps every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n % factor != 0 {
            return Err(invalid("coarsening factor must divide the interval count"));
        }
        Ok(Self { n: self.n / factor, ..*self })
    }
}

/// Uniform grid on `[-L, L]^d` with `m` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    half_width: f64,
    points: usize,
    dim: usize,
}

impl SpaceGrid {
    pub fn new(half_width: f64, points: usize, dim: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(invalid("space grid half-width must be positive"));
        }
        if points < 8 || points % 2 != 0 {
            return Err(invalid("space grid needs an even number of points, at least 8"));
        }
        if !(1..=2).contains(&dim) {
            return Err(invalid("space dimension must be 1 or 2"));
        }
        Ok(Self { half_width, points, dim })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Total number of nodes `m^d`.
    pub fn size(&self) -> usize {
        if self.dim == 1 {
            self.points
        } else {
            self.points * self.points
        }
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Coordinates of flat node `idx` (row-major, `x` fastest).
    pub fn point(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.coord(idx), 0.0]
        } else {
            [self.coord(idx % self.points), self.coord(idx / self.points)]
        }
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        pow(self.spacing(), self.dim as f64)
    }

    /// Angular frequency of signed mode index `k` on the periodic box.
    pub fn frequency(&self, k: i64) -> f64 {
        PI * k as f64 / self.half_width
    }
}

/// Real values on a [`SpaceGrid`]; zero outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: SpaceGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: SpaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(invalid("field length does not match grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpaceGrid) -> Self {
        Self { grid, values: vec![0.0; grid.size()] }
    }

    pub fn from_fn(grid: SpaceGrid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.size())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        crate::stats::max_abs(&self.values)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(&self.values, p, self.grid.cell_volume())
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0)
    }

    /// `∫ f dx` by the rectangle rule.
    pub fn mass(&self) -> f64 {
        crate::math::pairwise_sum(&self.values) * self.grid.cell_volume()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    /// Four-point cubic interpolation; zero outside the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        interpolate(&self.grid, &self.values, x)
    }

    /// Central-difference partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        Self { grid: self.grid, values: central_difference(&self.grid, &self.values, axis) }
    }

    /// Central-difference divergence of a vector field given by components.
    pub fn divergence(components: &[ScalarField]) -> Self {
        let grid = components[0].grid;
        let mut out = vec![0.0; grid.size()];
        for (axis, c) in components.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(central_difference(&grid, &c.values, axis)) {
                *o += v;
            }
        }
        Self { grid, values: out }
    }
}

pub(crate) fn lp_norm(values: &[f64], p: f64, cell: f64) -> f64 {
    if p.is_infinite() {
        return crate::stats::max_abs(values);
    }
    let terms: Vec<f64> = values.iter().map(|v| pow(fabs(*v), p)).collect();
    pow(crate::math::pairwise_sum(&terms) * cell, 1.0 / p)
}

pub(crate) fn central_difference(grid: &SpaceGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let m = grid.points();
    let h = grid.spacing();
    let get = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= m as isize || j >= m as isize {
            0.0
        } else if grid.dim() == 1 {
            values[i as usize]
        } else {
            values[j as usize * m + i as usize]
        }
    };
    let mut out = vec![0.0; values.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let (i, j) = if grid.dim() == 1 { (idx as isize, 0) } else { ((idx % m) as isize, (idx / m) as isize) };
        *o = if axis == 0 {
            (get(i + 1, j) - get(i - 1, j)) / (2.0 * h)
        } else {
            (get(i, j + 1) - get(i, j - 1)) / (2.0 * h)
        };
    }
    out
}

pub(crate) fn interpolate(grid: &SpaceGrid, values: &[f64], x: &[f64]) -> f64 {
    let (w, base) = match cubic_stencil(grid, x[0]) {
        Some(s) => s,
        None => return 0.0,
    };
    let m = grid.points() as isize;
    if grid.dim() == 1 {
        let mut acc = 0.0;
        for a in 0..4 {
            let i = base + a as isize;
            if i >= 0 && i < m {
                acc += w[a] * values[i as usize];
            }
        }
        acc
    } else {
        let (wy, by) = match cubic_stencil(grid, x[1]) {
            Some(s) => s,
            None => return 0.0,
        };
        let mut acc = 0.0;
        for b in 0..4 {
            let j = by + b as isize;
            if j < 0 || j >= m {
                continue;
            }
            for a in 0..4 {
                let i = base + a as isize;
                if i >= 0 && i < m {
                    acc += wy[b] * w[a] * values[j as usize * m as usize + i as usize];
                }
            }
        }
        acc
    }
}

/// Cubic stencil `(weights, first index)` for coordinate `x`, or `None` when
/// `x` is outside the box.
pub(crate) fn cubic_stencil(grid: &SpaceGrid, x: f64) -> Option<([f64; 4], isize)> {
    let h = grid.spacing();
    let s = (x + grid.half_width()) / h;
    if !(s >= -1.0) || s > grid.points() as f64 {
        return None;
    }
    let i0 = floor(s);
    let u = s - i0;
    Some((crate::math::cubic_weights(u), i0 as isize - 1))
}

/// Space–time field with `components` values per space node, stored as
/// `[time][component][space]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub tgrid: TimeGrid,
    pub sgrid: SpaceGrid,
    pub components: usize,
    pub values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(tgrid: TimeGrid, sgrid: SpaceGrid, components: usize) -> Self {
        Self { tgrid, sgrid, components, values: vec![0.0; tgrid.len() * components * sgrid.size()] }
    }

    pub fn from_fn(
        tgrid: TimeGrid,
        sgrid: SpaceGrid,
        components: usize,
        mut f: impl FnMut(f64, &[f64], &mut [f64]),
    ) -> Self {
        let mut field = Self::zeros(tgrid, sgrid, components);
        let mut buf = vec![0.0; components];
        for k in 0..tgrid.len() {
            let t = tgrid.node(k);
            for i in 0..sgrid.size() {
                let p = sgrid.point(i);
                f(t, &p[..sgrid.dim()], &mut buf);
                for c in 0..components {
                    let off = field.offset(k, c) + i;
                    field.values[off] = buf[c];
                }
            }
        }
        field
    }

    #[inline]
    pub fn offset(&self, k: usize, c: usize) -> usize {
        (k * self.components + c) * self.sgrid.size()
    }

    pub fn slice(&self, k: usize, c: usize) -> &[f64] {
        let o = self.offset(k, c);
        &self.values[o..o + self.sgrid.size()]
    }

    pub fn slice_mut(&mut self, k: usize, c: usize) -> &mut [f64] {
        let o = self.offset(k, c);
        let n = self.sgrid.size();
        &mut self.values[o..o + n]
    }

    pub fn slice_field(&self, k: usize, c: usize) -> ScalarField {
        ScalarField { grid: self.sgrid, values: self.slice(k, c).to_vec() }
    }

    pub fn sup_norm(&self) -> f64 {
        crate::stats::max_abs(&self.values)
    }
}

/// Fitted power law used for all regularity estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityEstimate {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub scale_range: (i32, i32),
}

impl RegularityEstimate {
    /// Sentinel for fields whose block norms vanish faster than any power.
    pub fn super_smooth(scale_range: (i32, i32)) -> Self {
        Self { exponent: f64::INFINITY, intercept: 0.0, r2: 1.0, scale_range }
    }

    pub fn is_super_smooth(&self) -> bool {
        self.exponent == f64::INFINITY
    }
}

/// Minimum number of scales behind any reported estimate.
pub const MIN_SCALES: usize = 4;

// ---------------------------------------------------------------------------
// Mollification

/// The standard bump `exp(-1/(1-r^2))` on the unit ball, rescaled by `eps` and
/// normalised to unit discrete mass on the grid.
#[derive(Debug, Clone)]
pub struct Mollifier {
    eps: f64,
    radius: isize,
    dim: usize,
    /// `ρ^ε(y) h^d` at each stencil offset.
    weights: Vec<f64>,
    /// `∇ρ^ε(y) h^d` per axis at each stencil offset.
    gradient: [Vec<f64>; 2],
}

#[inline]
pub fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        exp(-1.0 / (1.0 - r2))
    }
}

impl Mollifier {
    pub fn new(grid: &SpaceGrid, eps: f64) -> Result<Self> {
        let h = grid.spacing();
        if !(eps >= h) {
            return Err(Error::UnderResolved { eps, spacing: h });
        }
        let radius = floor(eps / h) as isize;
        let width = (2 * radius + 1) as usize;
        let dim = grid.dim();
        let count = if dim == 1 { width } else { width * width };
        let mut weights = vec![0.0; count];
        let mut gx = vec![0.0; count];
        let mut gy = vec![0.0; count];
        for idx in 0..count {
            let (a, b) = if dim == 1 {
                (idx as isize - radius, 0)
            } else {
                ((idx % width) as isize - radius, (idx / width) as isize - radius)
            };
            let y = [a as f64 * h / eps, b as f64 * h / eps];
            let r2 = y[0] * y[0] + y[1] * y[1];
            let rho = bump(r2);
            weights[idx] = rho;
            if r2 < 1.0 {
                let f = -2.0 * rho / ((1.0 - r2) * (1.0 - r2)) / eps;
                gx[idx] = f * y[0];
                gy[idx] = f * y[1];
            }
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        for g in gx.iter_mut().chain(gy.iter_mut()) {
            *g /= total;
        }
        Ok(Self { eps, radius, dim, weights, gradient: [gx, gy] })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn convolve_with(&self, kernel: &[f64], grid: &SpaceGrid, values: &[f64]) -> Vec<f64> {
        let m = grid.points() as isize;
        let r = self.radius;
        let width = 2 * r + 1;
        let mut out = vec![0.0; values.len()];
        if self.dim == 1 {
            for i in 0..m {
                let mut acc = 0.0;
                for a in -r..=r {
                    let src = i - a;
                    if src >= 0 && src < m {
                        acc += kernel[(a + r) as usize] * values[src as usize];
                    }
                }
                out[i as usize] = acc;
            }
        } else {
            for j in 0..m {
                for i in 0..m {
                    let mut acc = 0.0;
                    for b in -r..=r {
                        let sj = j - b;
                        if sj < 0 || sj >= m {
                            continue;
                        }
                        for a in -r..=r {
                            let si = i - a;
                            if si >= 0 && si < m {
                                acc += kernel[((b + r) * width + a + r) as usize] * values[(sj * m + si) as usize];
                            }
                        }
                    }
                    out[(j * m + i) as usize] = acc;
                }
            }
        }
        out
    }

    /// `ρ^ε * f` on raw grid values.
    pub fn apply(&self, grid: &SpaceGrid, values: &[f64]) -> Vec<f64> {
        self.convolve_with(&self.weights, grid, values)
    }

    /// `∂_axis ρ^ε * f`.
    pub fn apply_gradient(&self, grid: &SpaceGrid, values: &[f64], axis: usize) -> Vec<f64> {
        self.convolve_with(&self.gradient[axis], grid, values)
    }

    /// Continuous Fourier factor `∫ ρ(y) cos(ξ·y) dy` (1-D) of the unit-mass
    /// bump, by composite Gauss–Legendre quadrature.
    pub fn fourier_factor_1d(eps: f64, xi: f64) -> f64 {
        let rule = crate::math::GaussRule::new(32);
        let panels = 16;
        let mut num = 0.0;
        let mut den = 0.0;
        for p in 0..panels {
            let a = -1.0 + 2.0 * p as f64 / panels as f64;
            let b = a + 2.0 / panels as f64;
            num += rule.integrate(a, b, |y| bump(y * y) * cos(xi * eps * y));
            den += rule.integrate(a, b, |y| bump(y * y));
        }
        num / den
    }
}

pub fn mollify(f: &ScalarField, eps: f64) -> Result<ScalarField> {
    let moll = Mollifier::new(&f.grid, eps)?;
    Ok(ScalarField { grid: f.grid, values: moll.apply(&f.grid, &f.values) })
}

pub fn mollify_space_time(f: &SpaceTimeField, eps: f64) -> Result<SpaceTimeField> {
    let moll = Mollifier::new(&f.sgrid, eps)?;
    let mut out = f.clone();
    for k in 0..f.tgrid.len() {
        for c in 0..f.components {
            let v = moll.apply(&f.sgrid, f.slice(k, c));
            out.slice_mut(k, c).copy_from_slice(&v);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Heat semigroup

/// `P_t f` with the Gaussian kernel of variance `t`, applied spectrally on a
/// zero-padded box of twice the width.
pub fn heat_semigroup(f: &ScalarField, t: f64) -> Result<ScalarField> {
    if !(t >= 0.0) {
        return Err(invalid("heat semigroup needs t >= 0"));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let grid = f.grid;
    let m = grid.points();
    let mp = 2 * m;
    if !is_power_of_two(mp) {
        return Err(Error::NotPowerOfTwo(m));
    }
    // Padded box length 4L.
    let dxi = 2.0 * PI / (4.0 * grid.half_width());
    let offset = m / 2;
    if grid.dim() == 1 {
        let mut buf = vec![C64::new(0.0, 0.0); mp];
        for i in 0..m {
            buf[i + offset] = C64::new(f.values[i], 0.0);
        }
        fft::forward(&mut buf)?;
        for (k, z) in buf.iter_mut().enumerate() {
            let xi = dxi * fft::signed_index(k, mp) as f64;
            *z *= exp(-0.5 * t * xi * xi);
        }
        fft::inverse(&mut buf)?;
        let values = (0..m).map(|i| buf[i + offset].re).collect();
        Ok(ScalarField { grid, values })
    } else {
        let mut buf = vec![C64::new(0.0, 0.0); mp * mp];
        for j in 0..m {
            for i in 0..m {
                buf[(j + offset) * mp + i + offset] = C64::new(f.values[j * m + i], 0.0);
            }
        }
        fft::forward_2d(&mut buf, mp)?;
        for ky in 0..mp {
            let xy = dxi * fft::signed_index(ky, mp) as f64;
            for kx in 0..mp {
                let xx = dxi * fft::signed_index(kx, mp) as f64;
                buf[ky * mp + kx] *= exp(-0.5 * t * (xx * xx + xy * xy));
            }
        }
        fft::inverse_2d(&mut buf, mp)?;
        let mut values = vec![0.0; m * m];
        for j in 0..m {
            for i in 0..m {
                values[j * m + i] = buf[(j + offset) * mp + i + offset].re;
            }
        }
        Ok(ScalarField { grid, values })
    }
}

// ---------------------------------------------------------------------------
// Hölder regularity of paths

/// Exact discrete Hölder seminorm: max over node pairs of
/// `|p_t - p_s| / |t - s|^gamma`.
pub fn holder_seminorm(path: &SamplePath, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("Hölder exponent must lie in (0, 1]"));
    }
    if path.len() < 2 {
        return Err(invalid("path needs at least two nodes"));
    }
    Ok(holder_seminorm_raw(&path.tgrid.nodes(), &path.values, path.dim, gamma))
}

pub(crate) fn holder_seminorm_raw(times: &[f64], values: &[f64], dim: usize, gamma: f64) -> f64 {
    let n = times.len();
    let mut best: f64 = 0.0;
    for i in 0..n {
        let pi = &values[i * dim..(i + 1) * dim];
        for j in i + 1..n {
            let pj = &values[j * dim..(j + 1) * dim];
            let mut d2 = 0.0;
            for c in 0..dim {
                let d = pj[c] - pi[c];
                d2 += d * d;
            }
            let r = sqrt(d2) / pow(times[j] - times[i], gamma);
            if r > best {
                best = r;
            }
        }
    }
    best
}

/// Log-log regression of the mean absolute increment at dyadic lags against
/// the lag. Lags run from one step up to an eighth of the path.
pub fn estimate_holder_exponent(path: &SamplePath) -> Result<RegularityEstimate> {
    let n = path.tgrid.intervals();
    if path.len() < 64 {
        return Err(Error::TooFewScales { got: path.len(), needed: 64 });
    }
    let dt = path.tgrid.step();
    let dim = path.dim;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1usize;
    let mut level = 0i32;
    while lag <= n / 8 {
        let mut acc = Vec::with_capacity(n + 1 - lag);
        for i in 0..=n - lag {
            let mut d2 = 0.0;
            for c in 0..dim {
                let d = path.values[(i + lag) * dim + c] - path.values[i * dim + c];
                d2 += d * d;
            }
            acc.push(sqrt(d2));
        }
        let mean = crate::stats::mean(&acc);
        if mean > 0.0 {
            xs.push(log2(lag as f64 * dt));
            ys.push(log2(mean));
        }
        lag *= 2;
        level += 1;
    }
    if xs.len() < MIN_SCALES {
        if xs.is_empty() {
            // Constant path.
            return Ok(RegularityEstimate::super_smooth((0, level - 1)));
        }
        return Err(Error::TooFewScales { got: xs.len(), needed: MIN_SCALES });
    }
    let fit = linear_fit(&xs, &ys).ok_or_else(|| invalid("degenerate regression"))?;
    Ok(RegularityEstimate { exponent: fit.slope, intercept: fit.intercept, r2: fit.r2, scale_range: (0, level - 1) })
}

// ---------------------------------------------------------------------------
// Littlewood–Paley decomposition

/// Raised-cosine cutoff in `log2 r`: 1 on `[0, 1]`, 0 on `[2, ∞)`.
#[inline]
pub fn lp_cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let c = cos(0.5 * PI * log2(r));
        c * c
    }
}

/// Index of the finest block for `m` points per axis: `log2(m) - 2`.
pub fn finest_block(m: usize) -> i32 {
    log2(m as f64) as i32 - 2
}

/// Multiplier of block `j ∈ {-1, 0, .., J}` at radial mode index `k`.
/// The top block absorbs every remaining frequency so the multipliers sum to
/// one on the whole grid spectrum.
pub fn lp_multiplier(j: i32, k: f64, finest: i32) -> f64 {
    if j == -1 {
        return lp_cutoff(k);
    }
    let scale = pow(2.0, j as f64);
    let lower = lp_cutoff(k / scale);
    if j == finest {
        1.0 - lower
    } else {
        lp_cutoff(k / (2.0 * scale)) - lower
    }
}

/// Block norms in `L^p`, index 0 for `Δ_{-1}`.
pub(crate) fn radial_mode(grid: &SpaceGrid, idx: usize) -> f64 {
    let m = grid.points();
    if grid.dim() == 1 {
        fabs(fft::signed_index(idx, m) as f64)
    } else {
        let kx = fft::signed_index(idx % m, m) as f64;
        let ky = fft::signed_index(idx / m, m) as f64;
        sqrt(kx * kx + ky * ky)
    }
}

pub(crate) fn spectrum(f: &ScalarField) -> Result<Vec<C64>> {
    let m = f.grid.points();
    if !is_power_of_two(m) {
        return Err(Error::NotPowerOfTwo(m));
    }
    let mut buf: Vec<C64> = f.values.iter().map(|v| C64::new(*v, 0.0)).collect();
    if f.grid.dim() == 1 {
        fft::forward(&mut buf)?;
    } else {
        fft::forward_2d(&mut buf, m)?;
    }
    Ok(buf)
}

pub(crate) fn from_spectrum(grid: SpaceGrid, mut buf: Vec<C64>) -> Result<ScalarField> {
    if grid.dim() == 1 {
        fft::inverse(&mut buf)?;
    } else {
        fft::inverse_2d(&mut buf, grid.points())?;
    }
    Ok(ScalarField { grid, values: buf.iter().map(|z| z.re).collect() })
}

/// `Δ_{-1} f, Δ_0 f, .., Δ_J f` with `J = log2(m) - 2`.
pub fn littlewood_paley_blocks(f: &ScalarField) -> Result<Vec<ScalarField>> {
    let spec = spectrum(f)?;
    let finest = finest_block(f.grid.points());
    let mut blocks = Vec::with_capacity((finest + 2) as usize);
    for j in -1..=finest {
        let buf: Vec<C64> =
            spec.iter().enumerate().map(|(idx, z)| *z * lp_multiplier(j, radial_mode(&f.grid, idx), finest)).collect();
        blocks.push(from_spectrum(f.grid, buf)?);
    }
    Ok(blocks)
}

/// `(Σ_j 2^{s j q} ‖Δ_j f‖_{L^p}^q)^{1/q}` over the resolved blocks; `p` or
/// `q` may be infinite.
pub fn besov_norm(f: &ScalarField, s: f64, p: f64, q: f64) -> Result<f64> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(invalid("Besov indices p, q must lie in [1, ∞]"));
    }
    let blocks = littlewood_paley_blocks(f)?;
    let norms: Vec<f64> = blocks.iter().map(|b| b.lp_norm(p)).collect();
    Ok(besov_from_block_norms(&norms, s, q))
}

pub(crate) fn besov_from_block_norms(norms: &[f64], s: f64, q: f64) -> f64 {
    // The low-frequency block carries weight one, like block 0.
    let weighted = norms.iter().enumerate().map(|(i, n)| pow(2.0, s * (i.max(1) as f64 - 1.0)) * n);
    if q.is_infinite() {
        weighted.fold(0.0, f64::max)
    } else {
        let terms: Vec<f64> = weighted.map(|w| pow(w, q)).collect();
        pow(crate::math::pairwise_sum(&terms), 1.0 / q)
    }
}

/// Relative noise floor below which a block is treated as numerically zero.
const BLOCK_NOISE_FLOOR: f64 = 1e-11;

/// Regression of `log2 ‖Δ_j f‖_∞` on `j` over blocks `j_min..=j_max`.
///
/// Returns the super-smooth sentinel when a block in the range falls below the
/// noise floor.
pub fn estimate_regularity_from_block_norms(sup_norms: &[f64], j_min: i32, j_max: i32) -> Result<RegularityEstimate> {
    let available = sup_norms.len() as i32 - 1;
    if j_min < 0 || j_max > available - 1 || j_max - j_min + 1 < MIN_SCALES as i32 {
        return Err(Error::TooFewScales { got: (j_max - j_min + 1).max(0) as usize, needed: MIN_SCALES });
    }
    let peak = sup_norms.iter().cloned().fold(0.0, f64::max);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in j_min..=j_max {
        let v = sup_norms[(j + 1) as usize];
        if v > BLOCK_NOISE_FLOOR * peak && v > 0.0 {
            xs.push(j as f64);
            ys.push(log2(v));
        }
    }
    // Block norms reaching the floor inside the range mean the spectrum decays
    // faster than any power the grid can resolve.
    if xs.len() < (j_max - j_min + 1) as usize {
        return Ok(RegularityEstimate::super_smooth((j_min, j_max)));
    }
    let fit = linear_fit(&xs, &ys).ok_or_else(|| invalid("degenerate regression"))?;
    Ok(RegularityEstimate { exponent: -fit.slope, intercept: fit.intercept, r2: fit.r2, scale_range: (j_min, j_max) })
}

/// Estimated `s` with `f ∈ B^s_{∞,∞}`, from blocks `0..=J-2` (the two finest
/// blocks and `Δ_{-1}` are excluded).
pub fn estimate_spatial_regularity(f: &ScalarField) -> Result<RegularityEstimate> {
    let finest = finest_block(f.grid.points());
    let blocks = littlewood_paley_blocks(f)?;
    let norms: Vec<f64> = blocks.iter().map(|b| b.sup_norm()).collect();
    estimate_regularity_from_block_norms(&norms, 0, finest - 2)
}

/// Result of sweeping the heat semigroup over dyadic times.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatDecayReport {
    /// Fitted slope of `log ‖P_t f‖_{B^{s+ρ}_{p,p}}` against `log t`.
    pub slope: f64,
    pub r2: f64,
    /// `-ρ/2 - 0.1`; the slope must not fall below it.
    pub bound: f64,
    pub holds: bool,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
}

/// Dyadic heat times for a grid: `t_ℓ = ξ_ℓ^{-2}` where `ξ_ℓ` is the
/// angular frequency of mode `2^ℓ`, `ℓ = 2..=J-1`.
pub fn heat_sweep_times(grid: &SpaceGrid) -> Vec<f64> {
    let finest = finest_block(grid.points());
    (2..finest)
        .map(|l| {
            let xi = grid.frequency(1i64 << l);
            1.0 / (xi * xi)
        })
        .collect()
}

pub fn heat_estimate_check(f: &ScalarField, s: f64, rho: f64, p: f64) -> Result<HeatDecayReport> {
    if !(rho >= 0.0) {
        return Err(invalid("heat estimate needs rho >= 0"));
    }
    let times = heat_sweep_times(&f.grid);
    if times.len() < MIN_SCALES {
        return Err(Error::TooFewScales { got: times.len(), needed: MIN_SCALES });
    }
    let mut norms = Vec::with_capacity(times.len());
    for &t in &times {
        let pt = heat_semigroup(f, t)?;
        norms.push(besov_norm(&pt, s + rho, p, p)?);
    }
    let xs: Vec<f64> = times.iter().map(|t| log2(*t)).collect();
    let ys: Vec<f64> = norms.iter().map(|n| log2(*n)).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| invalid("degenerate regression"))?;
    let bound = -0.5 * rho - 0.1;
    Ok(HeatDecayReport { slope: fit.slope, r2: fit.r2, bound, holds: fit.slope >= bound, times, norms })
}
