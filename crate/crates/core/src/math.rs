//! Scalar helpers on top of `libm` so the crate stays `no_std`.

use alloc::vec::Vec;
use core::f64::consts::PI;

pub use libm::{cos, exp, fabs, floor, log, log2, pow, sin, sqrt, tgamma};

pub type C64 = num_complex::Complex<f64>;

/// `e^{i theta}`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    let (s, c) = libm::sincos(theta);
    C64::new(c, s)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

/// Euler Beta function via Gamma.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    tgamma(a) * tgamma(b) / tgamma(a + b)
}

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Pairwise (tree) summation; fixed reduction order independent of callers.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Nodes and weights of `n`-point Gauss–Legendre quadrature on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess then Newton on P_n.
        let mut x = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if fabs(dx) < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed Gauss–Legendre rule mapped to arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// `∫_a^b (b - s)^p f(s) ds` for `p > -1`, with the endpoint singularity
    /// removed by the substitution `b - s = y^{1/(p+1)}` on the panel touching
    /// `b`; the rest of the interval is cut into geometrically graded panels.
    pub fn integrate_right_singular(&self, a: f64, b: f64, p: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut hi = b - a;
        for _ in 0..SINGULAR_PANELS {
            let lo = 0.5 * hi;
            acc += self.integrate(b - hi, b - lo, |s| pow(b - s, p) * f(s));
            hi = lo;
        }
        let q = 1.0 / (p + 1.0);
        acc + self.integrate(0.0, pow(hi, p + 1.0), |y| f(b - pow(y, q))) * q
    }

    /// `∫_a^b (s - a)^p f(s) ds` for `p > -1`.
    pub fn integrate_left_singular(&self, a: f64, b: f64, p: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut hi = b - a;
        for _ in 0..SINGULAR_PANELS {
            let lo = 0.5 * hi;
            acc += self.integrate(a + lo, a + hi, |s| pow(s - a, p) * f(s));
            hi = lo;
        }
        let q = 1.0 / (p + 1.0);
        acc + self.integrate(0.0, pow(hi, p + 1.0), |y| f(a + pow(y, q))) * q
    }
}

/// Graded panels used before the substituted end panel of the singular rules.
const SINGULAR_PANELS: usize = 6;

/// Four-point Lagrange interpolation weights for the fractional offset
/// `u ∈ [0, 1)` between the second and third of four equispaced nodes.
/// Exact for cubic polynomials.
#[inline]
pub fn cubic_weights(u: f64) -> [f64; 4] {
    let um1 = u - 1.0;
    let um2 = u - 2.0;
    let up1 = u + 1.0;
    [-u * um1 * um2 / 6.0, up1 * um1 * um2 / 2.0, -up1 * u * um2 / 2.0, up1 * u * um1 / 6.0]
}

/// Derivative (with respect to `u`) of [`cubic_weights`].
#[inline]
pub fn cubic_weight_derivatives(u: f64) -> [f64; 4] {
    [
        -(3.0 * u * u - 6.0 * u + 2.0) / 6.0,
        (3.0 * u * u - 4.0 * u - 1.0) / 2.0,
        -(3.0 * u * u - 2.0 * u - 2.0) / 2.0,
        (3.0 * u * u - 1.0) / 6.0,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::new(8);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(15) + 3.0 * x * x);
        let exact = 2f64.powi(16) / 16.0 + 8.0;
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn singular_substitution_matches_beta_function() {
        let rule = GaussRule::new(16);
        // ∫_0^1 (1-s)^{-0.3} s^2 ds = B(3, 0.7)
        let v = rule.integrate_right_singular(0.0, 1.0, -0.3, |s| s * s);
        assert!((v - beta_fn(3.0, 0.7)).abs() < 1e-8);
    }

    #[test]
    fn cubic_weights_reproduce_cubics() {
        let f = |x: f64| 2.0 - x + 0.5 * x * x - 0.25 * x * x * x;
        let df = |x: f64| -1.0 + x - 0.75 * x * x;
        for &u in &[0.0, 0.3, 0.77] {
            let w = cubic_weights(u);
            let dw = cubic_weight_derivatives(u);
            let xs = [-1.0, 0.0, 1.0, 2.0];
            let v: f64 = (0..4).map(|i| w[i] * f(xs[i])).sum();
            let d: f64 = (0..4).map(|i| dw[i] * f(xs[i])).sum();
            assert!((v - f(u)).abs() < 1e-13);
            assert!((d - df(u)).abs() < 1e-13);
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 4950.0);
    }
}
