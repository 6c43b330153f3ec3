//! Drifts and fields shared by the solver experiments.

use regnoise_core::averaging::{average_grid_static, AveragedField, FnField, Jet, SpectralDrift};
use regnoise_core::gaussian::SamplePath;
use regnoise_core::gridcore::{ScalarField, SpaceGrid, TimeGrid};
use regnoise_core::math::C64;

/// Periodic drift `0.8 sin(ξx) + 0.5 cos(2ξx) + 0.1` on `[-4, 4)`, `ξ = π/4`.
pub fn smooth_drift() -> SpectralDrift {
    let coeffs = vec![C64::new(0.1, 0.0), C64::new(0.0, -0.4), C64::new(0.25, 0.0)];
    let mut b = SpectralDrift::from_coeffs(4.0, coeffs).expect("valid coefficients");
    // Smooth and periodic: no localisation constraint beyond the box.
    b.support_radius = 0.0;
    b
}

pub fn smooth_drift_exact(x: f64) -> f64 {
    let xi = std::f64::consts::PI / 4.0;
    0.8 * (xi * x).sin() + 0.5 * (2.0 * xi * x).cos() + 0.1
}

pub type Mat = [[f64; 2]; 2];

/// `A(t, x) = t M x` (zero noise, `b = Mx`) in dimension `dim` (1 uses `M[0][0]`).
pub fn linear_field(m: Mat, dim: usize, tgrid: TimeGrid) -> FnField<impl Fn(f64, &[f64], usize) -> Jet + Sync> {
    FnField {
        dim,
        tgrid,
        f: move |t: f64, x: &[f64], _o: usize| {
            let mut j = Jet::default();
            for c in 0..dim {
                for a in 0..dim {
                    j.value[c] += t * m[c][a] * x[a];
                    j.grad[c][a] = t * m[c][a];
                }
            }
            j
        },
    }
}

/// `b = (−∂_y ψ, ∂_x ψ)` with `ψ = amp·exp(−|x|²)`, differentiated with the
/// same central differences as the derivative stack, averaged along `w`.
pub fn rotational_field(sgrid: SpaceGrid, amp: f64, w: &SamplePath) -> regnoise_core::Result<AveragedField> {
    let psi = ScalarField::from_fn(sgrid, |x| amp * (-(x[0] * x[0] + x[1] * x[1])).exp());
    let b = [psi.derivative(1).scaled(-1.0), psi.derivative(0)];
    average_grid_static(&b, w, 1)
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// `e^{tM}` by scaling and squaring of a long Taylor series.
pub fn expm(m: &Mat, t: f64) -> Mat {
    let s = 10;
    let scale = t / f64::from(1 << s);
    let a = [[m[0][0] * scale, m[0][1] * scale], [m[1][0] * scale, m[1][1] * scale]];
    let mut term = [[1.0, 0.0], [0.0, 1.0]];
    let mut sum = term;
    for k in 1..25 {
        term = mat_mul(&term, &a);
        term.iter_mut().flatten().for_each(|v| *v /= k as f64);
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        sum = mat_mul(&sum, &sum);
    }
    sum
}
