//! Sewing of two-parameter germs and (non)linear Young integrals.
//!
//! A germ is only known on pairs of grid nodes, so the finest grid is the
//! finest partition available. [`sew`] forms the Riemann sums of the germ on
//! the dyadic coarsenings of the grid, measures how fast consecutive levels
//! contract, and extrapolates one step beyond the finest level with the ratio
//! `2^{1-β}` implied by the coherence exponent.

use alloc::vec;
use alloc::vec::Vec;

use crate::averaging::AveragedDrift;
use crate::error::{invalid, Error, Result};
use crate::gaussian::{PathKind, SamplePath};
use crate::gridcore::{holder_seminorm, TimeGrid};
use crate::math::{fabs, pow, sqrt};

/// Refinement ratio at or above which a germ is declared incoherent.
pub const MAX_CONTRACTION: f64 = 0.95;

/// Two-parameter map `(t_a, t_b) ↦ Γ_{t_a, t_b} ∈ R^d` on grid node indices.
pub trait Germ {
    fn dim(&self) -> usize;
    /// Claimed first-order exponent: `‖Γ_{s,t}‖ ≲ |t-s|^γ`.
    fn gamma(&self) -> f64;
    /// Claimed coherence exponent of `δΓ`.
    fn beta(&self) -> f64;
    fn eval(&self, a: usize, b: usize, out: &mut [f64]);
}

/// Germ given by a closure over node indices.
pub struct FnGerm<F> {
    pub dim: usize,
    pub gamma: f64,
    pub beta: f64,
    pub f: F,
}

impl<F: Fn(usize, usize, &mut [f64])> Germ for FnGerm<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn gamma(&self) -> f64 {
        self.gamma
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn eval(&self, a: usize, b: usize, out: &mut [f64]) {
        (self.f)(a, b, out)
    }
}

/// `t ↦ ∫_0^t Γ(dr)` with the diagnostics of the sewing.
#[derive(Debug, Clone, PartialEq)]
pub struct YoungIntegral {
    pub path: SamplePath,
    /// `sup ‖(IΓ)_{s,t} − Γ_{s,t}‖ / |t−s|^β` over dyadic node pairs.
    pub local_error_constant: f64,
    /// `‖S_{ℓ+2} − S_{ℓ+1}‖ / ‖S_{ℓ+1} − S_ℓ‖` for consecutive levels,
    /// coarse to fine (empty when the germ is additive).
    pub contraction_ratios: Vec<f64>,
    /// `sup_t ‖S_{ℓ+1}(t) − S_ℓ(t)‖` per level.
    pub level_differences: Vec<f64>,
}

impl YoungIntegral {
    /// `I_t − I_s` between nodes.
    pub fn increment(&self, a: usize, b: usize) -> Vec<f64> {
        let d = self.path.dim;
        (0..d).map(|c| self.path.values[b * d + c] - self.path.values[a * d + c]).collect()
    }
}

/// Riemann sums on the partition made of the level nodes before each node
/// plus the node itself. Level `stride = 1` is the finest.
fn level_sums(germ: &dyn Germ, n: usize, stride: usize) -> Vec<f64> {
    let d = germ.dim();
    let mut out = vec![0.0; (n + 1) * d];
    let mut base = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    for k in 1..=n {
        let last = ((k - 1) / stride) * stride;
        germ.eval(last, k, &mut tmp);
        for c in 0..d {
            out[k * d + c] = base[c] + tmp[c];
        }
        if k % stride == 0 {
            base.copy_from_slice(&out[k * d..(k + 1) * d]);
        }
    }
    out
}

fn sup_distance(a: &[f64], b: &[f64], d: usize) -> f64 {
    a.chunks(d)
        .zip(b.chunks(d))
        .map(|(x, y)| sqrt(x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum()))
        .fold(0.0, f64::max)
}

/// Sews `germ` over `tgrid` using `levels` dyadic coarsenings.
///
/// The returned path is the finest Riemann sum plus the geometric tail
/// `r/(1-r)(S_L − S_{L-1})`, `r = 2^{1-β}`.
pub fn sew(germ: &dyn Germ, tgrid: TimeGrid, levels: usize) -> Result<YoungIntegral> {
    let beta = germ.beta();
    if !(beta > 1.0) {
        return Err(invalid("sewing needs a coherence exponent β > 1"));
    }
    if levels < 3 {
        return Err(invalid("sewing needs at least three levels"));
    }
    let n = tgrid.intervals();
    let coarsest = 1usize << (levels - 1);
    if n % coarsest != 0 {
        return Err(invalid("grid intervals must be divisible by 2^(levels-1)"));
    }
    let d = germ.dim();
    let sums: Vec<Vec<f64>> = (0..levels).map(|l| level_sums(germ, n, coarsest >> l)).collect();
    let scale = sums.last().expect("levels ≥ 3").iter().fold(0.0f64, |m, v| m.max(fabs(*v))).max(1e-300);
    let level_differences: Vec<f64> = sums.windows(2).map(|w| sup_distance(&w[1], &w[0], d)).collect();
    let mut contraction_ratios = Vec::new();
    for w in level_differences.windows(2) {
        // Differences at round-off level carry no rate information.
        if w[0] <= 1e-13 * scale || w[1] <= 1e-13 * scale {
            continue;
        }
        let ratio = w[1] / w[0];
        contraction_ratios.push(ratio);
    }
    if let Some(r) = contraction_ratios.iter().cloned().find(|r| *r >= MAX_CONTRACTION) {
        return Err(Error::GermNotCoherent { ratio: r });
    }
    let r = pow(2.0, 1.0 - beta);
    let fine = &sums[levels - 1];
    let prev = &sums[levels - 2];
    let values: Vec<f64> = fine.iter().zip(prev).map(|(f, p)| f + r / (1.0 - r) * (f - p)).collect();
    let path = SamplePath::new(tgrid, d, values, 0, PathKind::Generic)?;
    let local_error_constant = local_error(germ, &path, beta);
    Ok(YoungIntegral { path, local_error_constant, contraction_ratios, level_differences })
}

/// `sup ‖(IΓ)_{s,t} − Γ_{s,t}‖ / |t−s|^exponent` over node pairs at dyadic lags.
fn local_error(germ: &dyn Germ, path: &SamplePath, exponent: f64) -> f64 {
    let n = path.tgrid.intervals();
    let d = path.dim;
    let dt = path.tgrid.step();
    let mut tmp = vec![0.0; d];
    let mut best: f64 = 0.0;
    let mut lag = 1;
    while lag <= n {
        let mut a = 0;
        while a + lag <= n {
            germ.eval(a, a + lag, &mut tmp);
            let mut e2 = 0.0;
            for c in 0..d {
                let inc = path.values[(a + lag) * d + c] - path.values[a * d + c];
                e2 += (inc - tmp[c]) * (inc - tmp[c]);
            }
            best = best.max(sqrt(e2) / pow(lag as f64 * dt, exponent));
            a += lag;
        }
        lag *= 2;
    }
    best
}

/// Declared exponents of a nonlinear Young integral: `A ∈ C^γ_t C^ν_x`,
/// `θ ∈ C^ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungExponents {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
}

impl YoungExponents {
    pub fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0
            && self.gamma <= 1.0
            && self.nu > 0.0
            && self.nu <= 1.0
            && self.rho > 0.0
            && self.rho <= 1.0)
        {
            return Err(invalid("Young exponents must lie in (0, 1]"));
        }
        if !(self.gamma + self.nu * self.rho > 1.0) {
            return Err(Error::YoungCondition(alloc::format!("γ + νρ = {:.4} ≤ 1", self.gamma + self.nu * self.rho)));
        }
        Ok(())
    }
}

/// Nonlinear Young integral with the measured constant of the local bound
/// `‖IΓ_{s,t} − A_{s,t}(θ_s)‖ ≤ C |t−s|^{γ+νρ} ⟦A⟧ ⟦θ⟧_ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearYoung {
    pub integral: YoungIntegral,
    /// Measured `C`.
    pub bound_constant: f64,
    /// `⟦A⟧`: sup of `|∇A_{s,t}(θ_s)| / |t-s|^γ` over dyadic node pairs.
    pub field_seminorm: f64,
    /// `⟦θ⟧_ρ`.
    pub path_seminorm: f64,
}

/// Germ `Γ_{s,t} = A_{s,t}(θ_s)`.
pub struct NonlinearGerm<'a, A: ?Sized> {
    pub field: &'a A,
    pub theta: &'a SamplePath,
    pub exponents: YoungExponents,
}

impl<A: AveragedDrift + ?Sized> Germ for NonlinearGerm<'_, A> {
    fn dim(&self) -> usize {
        self.theta.dim
    }
    fn gamma(&self) -> f64 {
        self.exponents.gamma
    }
    fn beta(&self) -> f64 {
        self.exponents.gamma + self.exponents.nu * self.exponents.rho
    }
    fn eval(&self, a: usize, b: usize, out: &mut [f64]) {
        let x = self.theta.point(a);
        let hi = self.field.value(b, x);
        let lo = self.field.value(a, x);
        for (c, o) in out.iter_mut().enumerate() {
            *o = hi[c] - lo[c];
        }
    }
}

/// `∫_0^t A(dr, θ_r)` for a field and a path on the same time grid.
pub fn nonlinear_young_integral<A: AveragedDrift + ?Sized>(
    field: &A,
    theta: &SamplePath,
    exponents: YoungExponents,
    levels: usize,
) -> Result<NonlinearYoung> {
    exponents.check()?;
    if field.tgrid().len() != theta.len() {
        return Err(invalid("field and path must share the time grid"));
    }
    if field.dim() != theta.dim {
        return Err(invalid("path dimension differs from the field dimension"));
    }
    let germ = NonlinearGerm { field, theta, exponents };
    let integral = sew(&germ, theta.tgrid, levels)?;

    let n = theta.tgrid.intervals();
    let dt = theta.tgrid.step();
    let d = theta.dim;
    let beta = germ.beta();
    let path_seminorm = holder_seminorm(theta, exponents.rho)?;
    let mut field_seminorm: f64 = 0.0;
    let mut raw_constant: f64 = 0.0;
    let mut tmp = vec![0.0; d];
    let mut lag = 1;
    while lag <= n {
        let mut a = 0;
        while a + lag <= n {
            let b = a + lag;
            let x = theta.point(a);
            let hi = field.jet(b, x, 1);
            let lo = field.jet(a, x, 1);
            let mut g2 = 0.0;
            for c in 0..d {
                for e in 0..d {
                    let g = hi.grad[c][e] - lo.grad[c][e];
                    g2 += g * g;
                }
            }
            let h = lag as f64 * dt;
            field_seminorm = field_seminorm.max(sqrt(g2) / pow(h, exponents.gamma));
            germ.eval(a, b, &mut tmp);
            let inc = integral.increment(a, b);
            let e: f64 = inc.iter().zip(&tmp).map(|(p, q)| (p - q) * (p - q)).sum();
            raw_constant = raw_constant.max(sqrt(e) / pow(h, beta));
            a += lag;
        }
        lag *= 2;
    }
    let norm = field_seminorm * path_seminorm;
    let bound_constant = if norm > 0.0 { raw_constant / norm } else { 0.0 };
    Ok(NonlinearYoung { integral, bound_constant, field_seminorm, path_seminorm })
}

/// `∫_0^t f_s dV_s` for matrix paths: `f` has `rows x d` entries, `V` has
/// `d x m` entries (row-major); the germ is `f_s (V_t − V_s)`.
pub fn linear_young_integral(
    f: &SamplePath,
    v: &SamplePath,
    rows: usize,
    exponents: (f64, f64),
    levels: usize,
) -> Result<YoungIntegral> {
    if rows == 0 || f.dim % rows != 0 {
        return Err(invalid("f does not have the declared number of rows"));
    }
    let inner = f.dim / rows;
    if v.dim % inner != 0 {
        return Err(invalid("V does not match the inner dimension of f"));
    }
    if f.len() != v.len() {
        return Err(invalid("f and V must share the time grid"));
    }
    let (gf, gv) = exponents;
    if !(gf + gv > 1.0) {
        return Err(Error::YoungCondition(alloc::format!("exponents sum to {:.4} ≤ 1", gf + gv)));
    }
    let cols = v.dim / inner;
    let germ = FnGerm {
        dim: rows * cols,
        gamma: gv,
        beta: gf + gv,
        f: |a: usize, b: usize, out: &mut [f64]| {
            let fa = f.point(a);
            let va = v.point(a);
            let vb = v.point(b);
            for i in 0..rows {
                for j in 0..cols {
                    let mut acc = 0.0;
                    for k in 0..inner {
                        acc += fa[i * inner + k] * (vb[k * cols + j] - va[k * cols + j]);
                    }
                    out[i * cols + j] = acc;
                }
            }
        },
    };
    sew(&germ, f.tgrid, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::{FnField, Jet};
    use crate::gaussian::sample_two_sided_bm;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::unit(1.0, n).unwrap()
    }

    #[test]
    fn additive_germ_is_exact() {
        let tg = grid(64);
        let g = |t: f64| libm::sin(3.0 * t) + t * t;
        let germ = FnGerm {
            dim: 1,
            gamma: 1.0,
            beta: 2.0,
            f: |a: usize, b: usize, o: &mut [f64]| o[0] = g(tg.node(b)) - g(tg.node(a)),
        };
        let i = sew(&germ, tg, 4).unwrap();
        for k in 0..=64 {
            assert!((i.path.values[k] - (g(tg.node(k)) - g(0.0))).abs() < 1e-14);
        }
        assert!(i.contraction_ratios.is_empty());
    }

    #[test]
    fn riemann_stieltjes_oracle() {
        let tg = grid(1 << 12);
        let f = |t: f64| libm::cos(2.0 * t);
        let g = |t: f64| libm::exp(t);
        let germ = FnGerm {
            dim: 1,
            gamma: 1.0,
            beta: 2.0,
            f: |a: usize, b: usize, o: &mut [f64]| o[0] = f(tg.node(a)) * (g(tg.node(b)) - g(tg.node(a))),
        };
        let i = sew(&germ, tg, 5).unwrap();
        // ∫_0^1 cos(2t) e^t dt = e(cos 2 + 2 sin 2)/5 − 1/5.
        let e = core::f64::consts::E;
        let exact = (e * (libm::cos(2.0) + 2.0 * libm::sin(2.0)) - 1.0) / 5.0;
        assert!((i.path.values[1 << 12] - exact).abs() < 1e-6, "{}", i.path.values[1 << 12] - exact);
        for r in &i.contraction_ratios {
            assert!((r - 0.5).abs() < 0.1 * 0.5, "{r}");
        }
    }

    #[test]
    fn incoherent_germ_is_rejected() {
        let tg = grid(256);
        let bm = sample_two_sided_bm(1, tg, 1).unwrap();
        // Γ_{s,t} = |W_t − W_s| is not coherent: refinements do not contract.
        let germ = FnGerm {
            dim: 1,
            gamma: 0.5,
            beta: 1.2,
            f: |a: usize, b: usize, o: &mut [f64]| o[0] = (bm.values[b] - bm.values[a]).abs(),
        };
        assert!(matches!(sew(&germ, tg, 4), Err(Error::GermNotCoherent { .. })));
    }

    #[test]
    fn brownian_germ_finest_level_is_the_ito_sum() {
        let tg = grid(1024);
        let bm = sample_two_sided_bm(3, tg, 1).unwrap();
        let w = &bm.values;
        let germ = FnGerm {
            dim: 1,
            gamma: 0.45,
            beta: 0.9,
            f: |a: usize, b: usize, o: &mut [f64]| o[0] = w[a] * (w[b] - w[a]),
        };
        let fine = level_sums(&germ, 1024, 1);
        let ito: f64 = (0..1024).map(|i| w[i] * (w[i + 1] - w[i])).sum();
        assert!((fine[1024] - ito).abs() < 1e-12);
        // Itô: ∫ W dW = (W_1² − [W]_1)/2.
        let qv: f64 = (0..1024).map(|i| (w[i + 1] - w[i]).powi(2)).sum();
        assert!((ito - 0.5 * (w[1024] * w[1024] - qv)).abs() < 1e-12);
        assert!(sew(&germ, tg, 4).is_err());
    }

    fn smooth_field(tg: TimeGrid) -> FnField<impl Fn(f64, &[f64], usize) -> Jet> {
        FnField {
            dim: 1,
            tgrid: tg,
            f: |t: f64, x: &[f64], _order: usize| {
                let mut j = Jet::default();
                j.value[0] = libm::sin(t) * libm::cos(x[0]) + t * t;
                j.grad[0][0] = -libm::sin(t) * libm::sin(x[0]);
                j.hess[0][0][0] = -libm::sin(t) * libm::cos(x[0]);
                j
            },
        }
    }

    #[test]
    fn nonlinear_integral_with_time_derivative_oracle() {
        let tg = grid(1 << 12);
        let a = smooth_field(tg);
        let theta = SamplePath::from_fn(tg, 1, |t, o| o[0] = 0.5 * libm::sin(5.0 * t));
        let ex = YoungExponents { gamma: 1.0, nu: 1.0, rho: 1.0 };
        let r = nonlinear_young_integral(&a, &theta, ex, 5).unwrap();
        // ∫_0^1 ∂_t A(u, θ_u) du by composite Simpson on a finer grid.
        let dta = |u: f64| libm::cos(u) * libm::cos(0.5 * libm::sin(5.0 * u)) + 2.0 * u;
        let m = 20_000;
        let h = 1.0 / m as f64;
        let mut s = dta(0.0) + dta(1.0);
        for i in 1..m {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * dta(i as f64 * h);
        }
        let exact = s * h / 3.0;
        assert!((r.integral.path.values[1 << 12] - exact).abs() < 1e-5);
        assert!(r.bound_constant.is_finite());
    }

    #[test]
    fn nonlinear_integral_trivial_cases() {
        let tg = grid(256);
        let ex = YoungExponents { gamma: 1.0, nu: 1.0, rho: 0.5 };
        // x-independent field.
        let g = FnField {
            dim: 1,
            tgrid: tg,
            f: |t: f64, _x: &[f64], _o: usize| {
                let mut j = Jet::default();
                j.value[0] = libm::exp(t);
                j
            },
        };
        let bm = sample_two_sided_bm(5, tg, 1).unwrap();
        let r = nonlinear_young_integral(&g, &bm, ex, 4).unwrap();
        for k in 0..=256 {
            assert!((r.integral.path.values[k] - (libm::exp(tg.node(k)) - 1.0)).abs() < 1e-12);
        }
        // Constant θ: the germ telescopes.
        let a = smooth_field(tg);
        let theta = SamplePath::from_fn(tg, 1, |_, o| o[0] = 0.3);
        let r = nonlinear_young_integral(&a, &theta, ex, 4).unwrap();
        let v = |t: f64| libm::sin(t) * libm::cos(0.3) + t * t;
        assert!((r.integral.path.values[256] - (v(1.0) - v(0.0))).abs() < 1e-12);
        // Condition violated.
        let bad = YoungExponents { gamma: 0.5, nu: 0.5, rho: 0.5 };
        assert!(matches!(nonlinear_young_integral(&a, &theta, bad, 4), Err(Error::YoungCondition(_))));
    }

    #[test]
    fn linear_integral_cases() {
        let tg = grid(1 << 10);
        let v = SamplePath::from_fn(tg, 1, |t, o| o[0] = libm::sin(t));
        let one = SamplePath::from_fn(tg, 1, |_, o| o[0] = 1.0);
        let r = linear_young_integral(&one, &v, 1, (1.0, 1.0), 4).unwrap();
        assert!((r.path.values[1 << 10] - libm::sin(1.0)).abs() < 1e-13);
        let f = SamplePath::from_fn(tg, 1, |t, o| o[0] = t);
        let r = linear_young_integral(&f, &v, 1, (1.0, 1.0), 5).unwrap();
        // ∫_0^1 t cos t dt = cos 1 + sin 1 − 1.
        let exact = libm::cos(1.0) + libm::sin(1.0) - 1.0;
        assert!((r.path.values[1 << 10] - exact).abs() < 1e-6);
        let c = SamplePath::from_fn(tg, 1, |_, o| o[0] = 2.0);
        let r = linear_young_integral(&f, &c, 1, (1.0, 1.0), 4).unwrap();
        assert_eq!(sqrt(r.path.values.iter().map(|v| v * v).sum()), 0.0);
        // 2x2 identity times a matrix path.
        let id = SamplePath::from_fn(tg, 4, |_, o| o.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]));
        let m = SamplePath::from_fn(tg, 4, |t, o| o.copy_from_slice(&[t, t * t, 1.0, libm::exp(t)]));
        let r = linear_young_integral(&id, &m, 2, (1.0, 1.0), 4).unwrap();
        let last = &r.path.values[4 << 10..];
        let want = [1.0, 1.0, 0.0, libm::exp(1.0) - 1.0];
        for (a, b) in last.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
