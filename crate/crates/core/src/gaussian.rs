//! Brownian and fractional Brownian samplers, the Mandelbrot–Van Ness
//! representation driven by a two-sided Brownian path, and the conditional
//! split of fBm into a part independent of the past and a past-measurable
//! part.
//!
//! Normalisation: the Volterra kernel carries `c_H = 1/Γ(H + 1/2)`, under
//! which the raw process has `Var W_1 = 1/(Γ(2H+1) sin πH)`. The
//! decomposition works with this raw process (so `Var w1 = c̃_H |t-s|^{2H}`),
//! while [`sample_fbm_volterra`] rescales to the standard covariance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::fft;
use crate::gridcore::TimeGrid;
use crate::math::{fabs, pow, sin, sqrt, tgamma, C64};
use crate::rng::{streams, CounterRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathKind {
    Bm,
    Fbm { hurst: f64 },
    Generic,
}

/// Vector-valued path on a time grid, stored node-major (`values[i*dim + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub tgrid: TimeGrid,
    pub dim: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub kind: PathKind,
}

impl SamplePath {
    pub fn new(tgrid: TimeGrid, dim: usize, values: Vec<f64>, seed: u64, kind: PathKind) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("path dimension must be at least 1"));
        }
        if values.len() != tgrid.len() * dim {
            return Err(invalid("path length does not match grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("path values must be finite"));
        }
        Ok(Self { tgrid, dim, values, seed, kind })
    }

    /// Deterministic path from a function of time.
    pub fn from_fn(tgrid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; tgrid.len() * dim];
        for (k, chunk) in values.chunks_mut(dim).enumerate() {
            f(tgrid.node(k), chunk);
        }
        Self { tgrid, dim, values, seed: 0, kind: PathKind::Generic }
    }

    pub fn len(&self) -> usize {
        self.tgrid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).copied().collect()
    }

    pub fn sup_norm(&self) -> f64 {
        crate::stats::max_abs(&self.values)
    }

    /// Every `stride`-th node.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        let tgrid = self.tgrid.coarsen(stride)?;
        let mut values = Vec::with_capacity(tgrid.len() * self.dim);
        for k in 0..tgrid.len() {
            values.extend_from_slice(self.point(k * stride));
        }
        Ok(Self { tgrid, values, ..self.clone() })
    }

    /// Nodes `start..=end` as a path on the corresponding sub-grid.
    pub fn restrict(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end >= self.len() {
            return Err(invalid("invalid restriction range"));
        }
        let tgrid = TimeGrid::new(self.tgrid.node(start), self.tgrid.node(end), end - start)?;
        let values = self.values[start * self.dim..(end + 1) * self.dim].to_vec();
        Ok(Self { tgrid, values, ..self.clone() })
    }

    /// Piecewise-linear interpolation at time `t` (clamped to the grid).
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let n = self.tgrid.intervals();
        let s = ((t - self.tgrid.t0()) / self.tgrid.step()).clamp(0.0, n as f64);
        let k = (libm::floor(s) as usize).min(n - 1);
        let u = s - k as f64;
        for c in 0..self.dim {
            let a = self.values[k * self.dim + c];
            let b = self.values[(k + 1) * self.dim + c];
            out[c] = a + u * (b - a);
        }
    }
}

/// Hurst index with the constants of the Volterra representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParams {
    pub hurst: f64,
    /// `1/Γ(H + 1/2)`.
    pub c_h: f64,
    /// `c_H² / (2H)`.
    pub c_tilde: f64,
}

impl HurstParams {
    pub fn new(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(invalid(format!("Hurst index must lie in (0, 1), got {hurst}")));
        }
        let c_h = 1.0 / tgamma(hurst + 0.5);
        Ok(Self { hurst, c_h, c_tilde: c_h * c_h / (2.0 * hurst) })
    }

    /// `Var W_1` of the raw Volterra process: `1/(Γ(2H+1) sin πH)`.
    pub fn volterra_variance(&self) -> f64 {
        1.0 / (tgamma(2.0 * self.hurst + 1.0) * sin(PI * self.hurst))
    }
}

/// `½(|t|^{2H} + |s|^{2H} - |t-s|^{2H})`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (pow(fabs(t), h2) + pow(fabs(s), h2) - pow(fabs(t - s), h2))
}

// ---------------------------------------------------------------------------
// Brownian motion

fn two_adic_valuation(mut n: usize) -> u32 {
    if n == 0 {
        return u32::MAX;
    }
    let mut v = 0;
    while n % 2 == 0 {
        n /= 2;
        v += 1;
    }
    v
}

/// Two-sided Brownian motion pinned at the zero node.
///
/// The grid is cut into blocks of `2^v` cells aligned with zero. Block
/// endpoints follow a random walk keyed by signed block index; interior nodes
/// are filled by Brownian-bridge bisection keyed by (block, level, position).
/// A dyadic refinement keeps the block layout, so the refined path agrees
/// with the coarse one on shared nodes.
pub fn sample_two_sided_bm(seed: u64, tgrid: TimeGrid, dim: usize) -> Result<SamplePath> {
    if dim == 0 {
        return Err(invalid("path dimension must be at least 1"));
    }
    let z = tgrid.zero_index()?;
    let n = tgrid.intervals();
    let v = two_adic_valuation(n).min(two_adic_valuation(z)).min(32);
    let block = 1usize << v;
    let dt = tgrid.step();
    let unit = dt * block as f64;
    let blocks_before = (z / block) as i64;
    let blocks = n / block;
    let rng = CounterRng::new(seed);
    let mut values = vec![0.0; (n + 1) * dim];
    for c in 0..dim {
        let walk = streams::with_component(streams::BM_UNIT, c);
        // Block endpoints.
        let mut acc = 0.0;
        for b in 0..blocks_before {
            let j = -1 - b;
            acc -= sqrt(unit) * rng.normal_signed(walk, j);
            values[(z - (b as usize + 1) * block) * dim + c] = acc;
        }
        acc = 0.0;
        for b in 0..(blocks as i64 - blocks_before) {
            acc += sqrt(unit) * rng.normal_signed(walk, b);
            values[(z + (b as usize + 1) * block) * dim + c] = acc;
        }
        // Bridges inside each block.
        for blk in 0..blocks {
            let j = blk as i64 - blocks_before;
            let start = blk * block;
            let mut span = block;
            let mut level = 0u64;
            while span > 1 {
                level += 1;
                let half = span / 2;
                let stream = streams::with_component(streams::BM_BRIDGE + level, c);
                let sd = sqrt(dt * half as f64 / 2.0);
                for p in 0..block / span {
                    let a = start + p * span;
                    let mid = a + half;
                    let key = ((j as u64) << 32) | p as u64;
                    let left = values[a * dim + c];
                    let right = values[(a + span) * dim + c];
                    values[mid * dim + c] = 0.5 * (left + right) + sd * rng.normal(stream, key);
                }
                span = half;
            }
        }
    }
    SamplePath::new(tgrid, dim, values, seed, PathKind::Bm)
}

// ---------------------------------------------------------------------------
// Exact fBm

/// Factorisation route for [`sample_fbm_exact_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbmMethod {
    /// Circulant embedding, falling back to Cholesky if the embedding is not
    /// nonnegative definite.
    Auto,
    Cholesky,
}

/// Largest grid accepted by the exact sampler.
pub const MAX_EXACT_INTERVALS: usize = 1 << 20;
/// Largest grid accepted by the Cholesky route.
pub const MAX_CHOLESKY_INTERVALS: usize = 1 << 13;

fn fgn_autocovariance(hurst: f64, dt: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    let m = if k == 0.0 { 1.0 } else { pow(k - 1.0, h2) };
    0.5 * pow(dt, h2) * (pow(k + 1.0, h2) - 2.0 * pow(k, h2) + m)
}

/// Exact fBm on a grid starting at 0 with covariance [`fbm_covariance`].
pub fn sample_fbm_exact(hurst: f64, tgrid: TimeGrid, seed: u64, dim: usize) -> Result<SamplePath> {
    sample_fbm_exact_with(hurst, tgrid, seed, dim, FbmMethod::Auto)
}

pub fn sample_fbm_exact_with(
    hurst: f64,
    tgrid: TimeGrid,
    seed: u64,
    dim: usize,
    method: FbmMethod,
) -> Result<SamplePath> {
    HurstParams::new(hurst)?;
    if tgrid.t0() != 0.0 {
        return Err(invalid("exact fBm sampler needs a grid starting at 0"));
    }
    if dim == 0 {
        return Err(invalid("path dimension must be at least 1"));
    }
    let n = tgrid.intervals();
    if n > MAX_EXACT_INTERVALS {
        return Err(invalid(format!("exact fBm sampler supports at most {MAX_EXACT_INTERVALS} intervals")));
    }
    let dt = tgrid.step();
    let rng = CounterRng::new(seed);
    let noise = match method {
        FbmMethod::Auto => match circulant_eigenvalues(hurst, dt, n)? {
            Some(lambda) => (0..dim).map(|c| circulant_sample(&lambda, n, &rng, c)).collect::<Result<Vec<_>>>()?,
            None => cholesky_noise(hurst, dt, n, &rng, dim)?,
        },
        FbmMethod::Cholesky => cholesky_noise(hurst, dt, n, &rng, dim)?,
    };
    let mut values = vec![0.0; (n + 1) * dim];
    for (c, inc) in noise.iter().enumerate() {
        let mut acc = 0.0;
        for k in 0..n {
            acc += inc[k];
            values[(k + 1) * dim + c] = acc;
        }
    }
    SamplePath::new(tgrid, dim, values, seed, PathKind::Fbm { hurst })
}

/// Eigenvalues of the minimal circulant embedding, or `None` if it has a
/// significantly negative eigenvalue.
fn circulant_eigenvalues(hurst: f64, dt: f64, n: usize) -> Result<Option<Vec<f64>>> {
    let half = n.next_power_of_two();
    let m = 2 * half;
    let mut row: Vec<C64> = (0..m)
        .map(|k| {
            let lag = if k <= half { k } else { m - k };
            C64::new(fgn_autocovariance(hurst, dt, lag), 0.0)
        })
        .collect();
    fft::forward(&mut row)?;
    let peak = row.iter().fold(0.0f64, |a, z| a.max(fabs(z.re)));
    let mut lambda = Vec::with_capacity(m);
    for z in &row {
        if z.re < -1e-10 * peak {
            return Ok(None);
        }
        lambda.push(z.re.max(0.0));
    }
    Ok(Some(lambda))
}

fn circulant_sample(lambda: &[f64], n: usize, rng: &CounterRng, c: usize) -> Result<Vec<f64>> {
    let m = lambda.len();
    let re = streams::with_component(streams::FGN_RE, c);
    let im = streams::with_component(streams::FGN_IM, c);
    let mut buf: Vec<C64> = (0..m)
        .map(|k| {
            let s = sqrt(lambda[k] / m as f64);
            C64::new(s * rng.normal(re, k as u64), s * rng.normal(im, k as u64))
        })
        .collect();
    fft::forward(&mut buf)?;
    Ok(buf[..n].iter().map(|z| z.re).collect())
}

fn cholesky_noise(hurst: f64, dt: f64, n: usize, rng: &CounterRng, dim: usize) -> Result<Vec<Vec<f64>>> {
    if n > MAX_CHOLESKY_INTERVALS {
        return Err(Error::Factorization(format!(
            "Cholesky fallback limited to {MAX_CHOLESKY_INTERVALS} intervals, got {n}"
        )));
    }
    let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(hurst, dt, k)).collect();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = gamma[i - j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::Factorization(format!(
                        "nonpositive pivot {s:e} at row {i} of {n} (H = {hurst})"
                    )));
                }
                l[i * n + i] = sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut out = Vec::with_capacity(dim);
    for c in 0..dim {
        let stream = streams::with_component(streams::CHOLESKY, c);
        let z: Vec<f64> = (0..n).map(|k| rng.normal(stream, k as u64)).collect();
        out.push((0..n).map(|i| (0..=i).map(|k| l[i * n + k] * z[k]).sum()).collect());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Volterra representation

/// Required ratio of the back horizon to the forward horizon.
pub const MIN_BACK_RATIO: f64 = 10.0;

/// Upper bound on the variance dropped by truncating the driver at
/// `-t_back`: `c_H² (H-1/2)² t² t_back^{2H-2} / (2-2H)`.
pub fn truncation_bound(params: &HurstParams, t: f64, t_back: f64) -> f64 {
    let h = params.hurst;
    params.c_h * params.c_h * (h - 0.5) * (h - 0.5) * t * t * pow(t_back, 2.0 * h - 2.0) / (2.0 - 2.0 * h)
}

/// Conditional split `W_t = w1 + w2` at `(s, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmDecomposition {
    pub s: f64,
    pub t: f64,
    /// Part built from driver increments on `[s, t]`.
    pub w1: Vec<f64>,
    /// Part built from driver increments before `s`.
    pub w2: Vec<f64>,
}

/// Raw (paper-normalised) fBm built from a two-sided Brownian driver.
#[derive(Debug, Clone)]
pub struct VolterraDriver {
    params: HurstParams,
    bm: SamplePath,
    zero: usize,
    /// Per-cell kernel integrals `ω[d] = Δ^{H-1/2}((d+1)^{H+1/2} - d^{H+1/2})/(H+1/2)`.
    weights: Vec<f64>,
    /// `X_i = c_H Σ_{j<i} ω[i-1-j] dB_j` for nodes `i ≥ zero`, per component.
    x: Vec<Vec<f64>>,
}

/// Per-cell integrals of `(t - r)^{H-1/2}` divided by the cell length, for
/// cells at lag `d = 0..count`.
pub fn volterra_cell_weights(hurst: f64, dt: f64, count: usize) -> Vec<f64> {
    let a = hurst + 0.5;
    let scale = pow(dt, hurst - 0.5) / a;
    (0..count).map(|d| scale * (pow(d as f64 + 1.0, a) - pow(d as f64, a))).collect()
}

impl VolterraDriver {
    pub fn new(hurst: f64, bm: SamplePath) -> Result<Self> {
        let params = HurstParams::new(hurst)?;
        let zero = bm.tgrid.zero_index()?;
        let n = bm.tgrid.intervals();
        let dim = bm.dim;
        let weights = volterra_cell_weights(hurst, bm.tgrid.step(), n);
        let mut x = Vec::with_capacity(dim);
        for c in 0..dim {
            let db: Vec<f64> = (0..n).map(|j| bm.values[(j + 1) * dim + c] - bm.values[j * dim + c]).collect();
            let conv = fft::convolve_real(&db, &weights)?;
            let mut xc = Vec::with_capacity(n + 1 - zero);
            for i in zero..=n {
                xc.push(if i == 0 { 0.0 } else { params.c_h * conv[i - 1] });
            }
            x.push(xc);
        }
        Ok(Self { params, bm, zero, weights, x })
    }

    pub fn params(&self) -> &HurstParams {
        &self.params
    }

    pub fn driver(&self) -> &SamplePath {
        &self.bm
    }

    pub fn zero_index(&self) -> usize {
        self.zero
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of forward intervals (nodes at times ≥ 0, minus one).
    pub fn forward_intervals(&self) -> usize {
        self.bm.tgrid.intervals() - self.zero
    }

    /// Forward grid `[0, T]`.
    pub fn forward_grid(&self) -> TimeGrid {
        TimeGrid::new(0.0, self.bm.tgrid.t1(), self.forward_intervals()).expect("forward grid is valid")
    }

    #[inline]
    pub fn increment(&self, cell: usize, c: usize) -> f64 {
        let d = self.bm.dim;
        self.bm.values[(cell + 1) * d + c] - self.bm.values[cell * d + c]
    }

    /// Raw fBm at forward node `k` (time `k Δ`).
    #[inline]
    pub fn raw(&self, k: usize, c: usize) -> f64 {
        self.x[c][k] - self.x[c][0]
    }

    /// Raw path on `[0, T]`.
    pub fn raw_path(&self) -> SamplePath {
        let n = self.forward_intervals();
        let dim = self.bm.dim;
        let mut values = vec![0.0; (n + 1) * dim];
        for k in 0..=n {
            for c in 0..dim {
                values[k * dim + c] = self.raw(k, c);
            }
        }
        SamplePath {
            tgrid: self.forward_grid(),
            dim,
            values,
            seed: self.bm.seed,
            kind: PathKind::Fbm { hurst: self.params.hurst },
        }
    }

    /// `w1` between forward nodes `a < b`: `c_H Σ_{a≤j<b} ω[b-1-j] dB_j`.
    pub fn w1(&self, a: usize, b: usize, c: usize) -> f64 {
        let mut acc = 0.0;
        for j in a..b {
            acc += self.weights[b - 1 - j] * self.increment(self.zero + j, c);
        }
        self.params.c_h * acc
    }

    /// Past-measurable part `w2 = W_b - w1(a, b)`.
    pub fn w2(&self, a: usize, b: usize, c: usize) -> f64 {
        self.raw(b, c) - self.w1(a, b, c)
    }

    /// Split at forward node indices `a < b`.
    pub fn decompose_nodes(&self, a: usize, b: usize) -> Result<FbmDecomposition> {
        if a >= b {
            return Err(invalid("decomposition needs s < t"));
        }
        if b > self.forward_intervals() {
            return Err(invalid("decomposition time beyond the driver"));
        }
        let dim = self.bm.dim;
        let w1: Vec<f64> = (0..dim).map(|c| self.w1(a, b, c)).collect();
        let w2 = (0..dim).map(|c| self.raw(b, c) - w1[c]).collect();
        let g = self.forward_grid();
        Ok(FbmDecomposition { s: g.node(a), t: g.node(b), w1, w2 })
    }

    /// Exact variance of the discrete `w1` over `b - a` cells.
    pub fn discrete_conditional_variance(&self, cells: usize) -> f64 {
        let ss: f64 = self.weights[..cells].iter().map(|w| w * w).sum();
        self.params.c_h * self.params.c_h * ss * self.bm.tgrid.step()
    }
}

/// Split of the raw fBm driven by `driver` at times `s < t` (grid nodes).
pub fn conditional_decomposition(driver: &SamplePath, hurst: f64, s: f64, t: f64) -> Result<FbmDecomposition> {
    if !(s < t) {
        return Err(invalid("decomposition needs s < t"));
    }
    if s < 0.0 {
        return Err(invalid("decomposition needs s ≥ 0"));
    }
    let vd = VolterraDriver::new(hurst, driver.clone())?;
    let g = vd.forward_grid();
    let a = g.index_of(s).ok_or_else(|| invalid("s is not a grid node"))?;
    let b = g.index_of(t).ok_or_else(|| invalid("t is not a grid node"))?;
    vd.decompose_nodes(a, b)
}

/// fBm on `[0, T]` through the truncated Volterra representation, rescaled to
/// the standard covariance `½(t^{2H} + s^{2H} - |t-s|^{2H})`.
pub fn sample_fbm_volterra(hurst: f64, tgrid: TimeGrid, seed: u64, dim: usize) -> Result<SamplePath> {
    if hurst == 0.5 {
        return Err(invalid("Volterra sampler is for H ≠ 1/2; use the Brownian sampler"));
    }
    let params = HurstParams::new(hurst)?;
    let back = -tgrid.t0();
    let horizon = tgrid.t1();
    if !(horizon > 0.0) {
        return Err(invalid("Volterra grid must extend to positive times"));
    }
    if back < MIN_BACK_RATIO * horizon {
        return Err(Error::TruncationTooSmall { back, horizon });
    }
    let bm = sample_two_sided_bm(seed, tgrid, dim)?;
    let vd = VolterraDriver::new(hurst, bm)?;
    let mut path = vd.raw_path();
    let scale = 1.0 / sqrt(params.volterra_variance());
    for v in path.values.iter_mut() {
        *v *= scale;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{cross_moment_with_se, mean_with_se};

    #[test]
    fn hurst_constants() {
        let p = HurstParams::new(0.5).unwrap();
        assert!((p.c_h - 1.0).abs() < 1e-14 && (p.c_tilde - 1.0).abs() < 1e-14);
        assert!((p.volterra_variance() - 1.0).abs() < 1e-12);
        assert!(HurstParams::new(1.0).is_err());
        // Γ(2-2H) cos(πH) / (πH(1-2H)) is the same quantity in another form.
        let h = 0.3;
        let alt = tgamma(2.0 - 2.0 * h) * libm::cos(PI * h) / (PI * h * (1.0 - 2.0 * h));
        assert!((HurstParams::new(h).unwrap().volterra_variance() - alt).abs() < 1e-10);
    }

    #[test]
    fn covariance_examples() {
        assert!((fbm_covariance(0.5, 0.3, 0.7) - 0.3).abs() < 1e-15);
        assert!((fbm_covariance(0.25, 0.5, 1.0) - 0.5).abs() < 1e-15);
        assert!((fbm_covariance(0.3, 0.8, 0.8) - pow(0.8, 0.6)).abs() < 1e-15);
    }

    #[test]
    fn bm_is_pinned_and_deterministic() {
        let g = TimeGrid::new(-2.0, 1.0, 96).unwrap();
        let a = sample_two_sided_bm(1, g, 2).unwrap();
        let b = sample_two_sided_bm(1, g, 2).unwrap();
        assert_eq!(a, b);
        let z = g.zero_index().unwrap();
        assert_eq!(a.point(z), &[0.0, 0.0]);
        assert!(sample_two_sided_bm(1, TimeGrid::new(0.5, 1.0, 8).unwrap(), 1).is_err());
    }

    #[test]
    fn bm_refinement_agrees_on_shared_nodes() {
        let g = TimeGrid::new(-3.0, 1.0, 12).unwrap();
        let coarse = sample_two_sided_bm(7, g, 1).unwrap();
        let fine = sample_two_sided_bm(7, g.refine().refine(), 1).unwrap();
        for k in 0..g.len() {
            assert_eq!(coarse.values[k], fine.values[4 * k]);
        }
    }

    #[test]
    fn exact_fbm_is_deterministic_and_starts_at_zero() {
        let g = TimeGrid::unit(1.0, 100).unwrap();
        let a = sample_fbm_exact(0.3, g, 5, 1).unwrap();
        assert_eq!(a, sample_fbm_exact(0.3, g, 5, 1).unwrap());
        assert_eq!(a.values[0], 0.0);
        assert!(sample_fbm_exact(0.3, TimeGrid::new(-1.0, 1.0, 8).unwrap(), 5, 1).is_err());
    }

    #[test]
    fn cholesky_route_has_the_right_covariance() {
        let g = TimeGrid::unit(1.0, 4).unwrap();
        let n = 4000;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for seed in 0..n {
            let p = sample_fbm_exact_with(0.25, g, seed, 1, FbmMethod::Cholesky).unwrap();
            xs.push(p.values[2]);
            ys.push(p.values[4]);
        }
        let (m, se) = cross_moment_with_se(&xs, &ys);
        assert!((m - 0.5).abs() < 4.0 * se, "m={m} se={se}");
    }

    #[test]
    fn volterra_weights_sum_to_the_kernel_integral() {
        // Σ_d ω[d] Δ = ∫_0^{nΔ} u^{H-1/2} du.
        let h = 0.3;
        let dt = 0.01;
        let w = volterra_cell_weights(h, dt, 100);
        let s: f64 = w.iter().sum::<f64>() * dt;
        assert!((s - pow(1.0, h + 0.5) / (h + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn volterra_at_half_is_the_driver() {
        let g = TimeGrid::new(-1.0, 1.0, 64).unwrap();
        let bm = sample_two_sided_bm(3, g, 1).unwrap();
        let vd = VolterraDriver::new(0.5, bm.clone()).unwrap();
        let z = vd.zero_index();
        for k in 0..=32 {
            assert!((vd.raw(k, 0) - bm.values[z + k]).abs() < 1e-12);
        }
        let d = vd.decompose_nodes(10, 20).unwrap();
        assert!((d.w2[0] - bm.values[z + 10]).abs() < 1e-12);
        assert!((d.w1[0] - (bm.values[z + 20] - bm.values[z + 10])).abs() < 1e-12);
    }

    #[test]
    fn decomposition_reconstructs_and_validates() {
        let g = TimeGrid::new(-10.0, 1.0, 11 * 32).unwrap();
        let bm = sample_two_sided_bm(9, g, 1).unwrap();
        let d = conditional_decomposition(&bm, 0.3, 0.25, 0.75).unwrap();
        let vd = VolterraDriver::new(0.3, bm.clone()).unwrap();
        assert!((d.w1[0] + d.w2[0] - vd.raw(24, 0)).abs() < 1e-12);
        assert!(conditional_decomposition(&bm, 0.3, 0.75, 0.25).is_err());
    }

    #[test]
    fn volterra_sampler_checks_truncation() {
        let g = TimeGrid::new(-5.0, 1.0, 60).unwrap();
        assert!(matches!(sample_fbm_volterra(0.3, g, 1, 1), Err(Error::TruncationTooSmall { .. })));
        let g = TimeGrid::new(-10.0, 1.0, 110).unwrap();
        assert!(sample_fbm_volterra(0.5, g, 1, 1).is_err());
        let p = sample_fbm_volterra(0.3, g, 1, 1).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p.len(), 11);
    }

    #[test]
    fn exact_sampler_variance_at_small_scale() {
        let g = TimeGrid::unit(1.0, 16).unwrap();
        let v: Vec<f64> = (0..3000).map(|s| sample_fbm_exact(0.7, g, s, 1).unwrap().values[16].powi(2)).collect();
        let (m, se) = mean_with_se(&v);
        assert!((m - 1.0).abs() < 4.0 * se);
    }
}
