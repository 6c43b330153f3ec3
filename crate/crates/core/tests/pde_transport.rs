#![allow(clippy::needless_range_loop)]

use regnoise_core::averaging::{average_grid_static, FnField, Jet, SpectralAverage, SpectralDrift};
use regnoise_core::gaussian::sample_fbm_exact;
use regnoise_core::gridcore::{ScalarField, SpaceGrid, TimeGrid};
use regnoise_core::math::C64;
use regnoise_core::pde::*;
use regnoise_core::yde::{compute_flow, FlowOptions, SolverSettings};

fn bump_datum(grid: SpaceGrid) -> ScalarField {
    ScalarField::from_fn(grid, |x| x.iter().map(|v| (-2.0 * v * v).exp()).product())
}

fn uniform_nodes(n: usize, count: usize) -> Vec<usize> {
    (0..=count).map(|i| i * n / count).collect()
}

fn smooth_drift() -> SpectralDrift {
    let coeffs = vec![C64::new(0.1, 0.0), C64::new(0.0, -0.4), C64::new(0.25, 0.0)];
    let mut b = SpectralDrift::from_coeffs(4.0, coeffs).unwrap();
    b.support_radius = 0.0;
    b
}

#[test]
fn constant_drift_translates_datum() {
    let n = 256;
    let c = 0.6;
    let a = FnField {
        dim: 1,
        tgrid: TimeGrid::unit(1.0, n).unwrap(),
        f: move |t: f64, _x: &[f64], _o: usize| {
            let mut j = Jet::default();
            j.value[0] = c * t;
            j
        },
    };
    let grid = SpaceGrid::new(3.0, 64, 1).unwrap();
    let u0 = bump_datum(SpaceGrid::new(4.0, 256, 1).unwrap());
    let mut opts = FlowOptions::new(n);
    opts.psi_nodes = uniform_nodes(n, 4);
    let atlas = compute_flow(&a, &grid, &opts).unwrap();
    let sol = solve_transport(&a, &u0, &atlas).unwrap();
    for (i, &k) in sol.nodes.iter().enumerate() {
        let t = k as f64 / n as f64;
        for p in 0..grid.size() {
            let x = grid.point(p)[0];
            let exact = (-2.0 * (x - c * t).powi(2)).exp();
            assert!((sol.u[i].values[p] - exact).abs() < 1e-3);
        }
    }
}

#[test]
fn zero_field_keeps_datum() {
    let n = 64;
    let a = FnField { dim: 1, tgrid: TimeGrid::unit(1.0, n).unwrap(), f: |_: f64, _: &[f64], _: usize| Jet::default() };
    let grid = SpaceGrid::new(2.0, 32, 1).unwrap();
    let u0 = bump_datum(grid);
    let mut opts = FlowOptions::new(n);
    opts.psi_nodes = uniform_nodes(n, 4);
    let atlas = compute_flow(&a, &grid, &opts).unwrap();
    let sol = solve_transport(&a, &u0, &atlas).unwrap();
    for u in &sol.u {
        assert_eq!(u.values, u0.values);
    }
    // Without ψ the transport solution is undefined.
    opts.psi_nodes.clear();
    let atlas = compute_flow(&a, &grid, &opts).unwrap();
    assert!(solve_transport(&a, &u0, &atlas).is_err());
}

#[test]
fn linear_drift_transport_uses_inverse_exponential() {
    // b(x) = λx in 1-D: ψ_t(x) = e^{−λt} x.
    let n = 512;
    let lambda = 0.8;
    let a = FnField {
        dim: 1,
        tgrid: TimeGrid::unit(1.0, n).unwrap(),
        f: move |t: f64, x: &[f64], _o: usize| {
            let mut j = Jet::default();
            j.value[0] = t * lambda * x[0];
            j.grad[0][0] = t * lambda;
            j
        },
    };
    let grid = SpaceGrid::new(2.0, 64, 1).unwrap();
    let u0 = bump_datum(SpaceGrid::new(4.0, 512, 1).unwrap());
    let mut opts = FlowOptions::new(n);
    opts.psi_nodes = uniform_nodes(n, 32);
    let atlas = compute_flow(&a, &grid, &opts).unwrap();
    let sol = solve_transport(&a, &u0, &atlas).unwrap();
    for (i, &k) in sol.nodes.iter().enumerate() {
        let t = k as f64 / n as f64;
        for p in 0..grid.size() {
            let y = (-lambda * t).exp() * grid.point(p)[0];
            assert!((sol.u[i].values[p] - (-2.0 * y * y).exp()).abs() < 1e-3);
        }
    }
    assert!(sol.increment_residual < 0.1, "{}", sol.increment_residual);
}

#[test]
fn constancy_along_rough_characteristics_2d() {
    let sgrid = SpaceGrid::new(4.0, 64, 2).unwrap();
    let psi = ScalarField::from_fn(sgrid, |x| 1.5 * (-(x[0] * x[0] + x[1] * x[1])).exp());
    let b = [psi.derivative(1).scaled(-1.0), psi.derivative(0)];
    let n = 256;
    let w = sample_fbm_exact(0.4, TimeGrid::unit(1.0, n).unwrap(), 9, 2).unwrap();
    let a = average_grid_static(&b, &w, 1).unwrap();
    let grid = SpaceGrid::new(1.5, 16, 2).unwrap();
    let mut opts = FlowOptions::new(n);
    opts.psi_nodes = uniform_nodes(n, 4);
    let atlas = compute_flow(&a, &grid, &opts).unwrap();
    let u0 = bump_datum(sgrid);
    let sol = solve_transport(&a, &u0, &atlas).unwrap();
    let probe = SpaceGrid::new(1.0, 16, 2).unwrap();
    let settings = SolverSettings::default();
    let r = characteristic_constancy(&a, &sol, &probe, &settings).unwrap();
    assert!(r.max_deviation <= 5.0 * r.tolerance, "{r:?}");
}

fn rough_setup(n: usize, seed: u64) -> (SpectralAverage, SpaceGrid, FlowOptions) {
    let b = smooth_drift();
    let w = sample_fbm_exact(0.4, TimeGrid::unit(1.0, n).unwrap(), seed, 1).unwrap();
    let a = SpectralAverage::new(&b, &w, 1).unwrap();
    let grid = SpaceGrid::new(3.0, 128, 1).unwrap();
    let mut opts = FlowOptions::new(n);
    opts.out_stride = n / 32;
    opts.psi_nodes = uniform_nodes(n, 32);
    (a, grid, opts)
}

#[test]
fn weak_residual_bounded_and_negative_control_diverges() {
    let n = 1024;
    let (a, grid, opts) = rough_setup(n, 17);
    let atlas = compute_flow(&a, &grid, &opts).unwrap();
    let u0 = bump_datum(SpaceGrid::new(4.0, 512, 1).unwrap());
    let sol = solve_transport(&a, &u0, &atlas).unwrap();
    let probes = probe_family(1, 2.0, 0.8);
    let good = transport_weak_residual(&sol, &a, &probes, None, 5).unwrap();
    assert!(good.variation < 2.0, "{good:?}");
    let frozen = TransportSolution::frozen(&u0, grid, sol.nodes.clone());
    let bad = transport_weak_residual(&frozen, &a, &probes, Some(good.gamma), 5).unwrap();
    assert!(bad.growth >= 10.0, "{bad:?}");
}

#[test]
fn zero_field_residual_vanishes() {
    let n = 64;
    let a = FnField { dim: 1, tgrid: TimeGrid::unit(1.0, n).unwrap(), f: |_: f64, _: &[f64], _: usize| Jet::default() };
    let grid = SpaceGrid::new(2.0, 32, 1).unwrap();
    let u0 = bump_datum(grid);
    let sol = TransportSolution::frozen(&u0, grid, uniform_nodes(n, 8));
    let r = transport_weak_residual(&sol, &a, &probe_family(1, 1.0, 0.5), Some(0.95), 3).unwrap();
    assert_eq!(r.max_ratio, 0.0);
}

#[test]
fn commutator_germ_defect_scales_like_two_gamma() {
    let n = 1024;
    let (a, grid, opts) = rough_setup(n, 17);
    let atlas = compute_flow(&a, &grid, &opts).unwrap();
    let u0 = bump_datum(SpaceGrid::new(4.0, 512, 1).unwrap());
    let sol = solve_transport(&a, &u0, &atlas).unwrap();
    let gamma = measure_time_exponent(&a, &grid).unwrap().min(1.0) - GAMMA_MARGIN;
    let eps = [0.4, 0.2, 0.1];
    let r = commutator_germ_scaling(&a, &sol, &atlas, &eps, 64, gamma).unwrap();
    assert!(r.min_exponent >= 2.0 * gamma - 0.1, "{r:?}");
}

#[test]
fn particle_pushforward_conserves_mass_and_follows_jacobian() {
    let n = 512;
    let lambda = 0.7;
    let a = FnField {
        dim: 1,
        tgrid: TimeGrid::unit(1.0, n).unwrap(),
        f: move |t: f64, x: &[f64], _o: usize| {
            let mut j = Jet::default();
            j.value[0] = t * lambda * x[0];
            j.grad[0][0] = t * lambda;
            j
        },
    };
    let grid = SpaceGrid::new(2.0, 64, 1).unwrap();
    let rho0 = |x: &[f64]| (-2.0 * x[0] * x[0]).exp();
    let v0 = ParticleMeasure::from_density(&grid, rho0);
    let settings = SolverSettings::default();
    let nodes = uniform_nodes(n, 4);
    let sol = solve_continuity(&a, &v0, &nodes, &settings).unwrap();
    for (m, &k) in sol.measures.iter().zip(&nodes) {
        assert_eq!(m.mass(), v0.mass());
        let t = k as f64 / n as f64;
        let dens = m.density.as_ref().unwrap();
        for i in 0..v0.count() {
            let exact = v0.density.as_ref().unwrap()[i] * (-lambda * t).exp();
            assert!((dens[i] - exact).abs() < 1e-3);
        }
    }
    let phi = |x: &[f64]| (-(x[0] - 0.3).powi(2)).exp();
    let qgrid = SpaceGrid::new(4.0, 256, 1).unwrap();
    let r = duality_check(&a, &v0, &sol, 4, rho0, phi, &qgrid, &settings).unwrap();
    assert_eq!(r.particles, r.pushforward);
    assert!(r.deviation < 1e-2, "{r:?}");
}

#[test]
fn divergence_free_density_is_constant_along_particles() {
    let sgrid = SpaceGrid::new(4.0, 64, 2).unwrap();
    let psi = ScalarField::from_fn(sgrid, |x| 1.5 * (-(x[0] * x[0] + x[1] * x[1])).exp());
    let b = [psi.derivative(1).scaled(-1.0), psi.derivative(0)];
    let n = 256;
    let w = sample_fbm_exact(0.4, TimeGrid::unit(1.0, n).unwrap(), 2, 2).unwrap();
    let a = average_grid_static(&b, &w, 1).unwrap();
    let grid = SpaceGrid::new(1.0, 8, 2).unwrap();
    let v0 = ParticleMeasure::from_density(&grid, |x| 1.0 + 0.5 * x[0]);
    let sol = solve_continuity(&a, &v0, &[n / 2, n], &SolverSettings::default()).unwrap();
    for m in &sol.measures {
        for (d, d0) in m.density.as_ref().unwrap().iter().zip(v0.density.as_ref().unwrap()) {
            assert!((d - d0).abs() < 1e-3);
        }
        assert_eq!(m.mass(), v0.mass());
    }
}

#[test]
fn commutator_sweep_vanishes_for_smooth_data() {
    let grid = SpaceGrid::new(std::f64::consts::PI, 2048, 1).unwrap();
    let h = ScalarField::from_fn(grid, |x| x[0].sin() + 0.5 * (2.0 * x[0]).cos());
    let g = [ScalarField::from_fn(grid, |x| (-x[0] * x[0]).exp() + 0.3 * x[0])];
    let eps = default_eps_sweep(&grid);
    let r = commutator_vanishing_check(&h, &g, &eps, 1.5).unwrap();
    assert!(r.monotone, "{r:?}");
    assert!(r.final_ratio < 0.05, "{r:?}");

    // Rough h: slower but still decreasing.
    let tent = ScalarField::from_fn(grid, |x| (1.0 - x[0].abs()).max(0.0));
    let r = commutator_vanishing_check(&tent, &g, &eps, 1.5).unwrap();
    assert!(r.slope > 0.0 && r.final_ratio < 1.0, "{r:?}");

    // Constant g: identically zero.
    let gc = [ScalarField::from_fn(grid, |_| 0.4)];
    let r = commutator_vanishing_check(&h, &gc, &eps, 1.5).unwrap();
    assert!(r.sups.iter().all(|s| *s < 1e-8));
}

#[test]
fn commutator_bound_constant_over_family() {
    let grid = SpaceGrid::new(std::f64::consts::PI, 1024, 1).unwrap();
    let mut ratios = Vec::new();
    for k in 1..=3 {
        for eps in [0.4, 0.2, 0.1] {
            let h = ScalarField::from_fn(grid, |x| (k as f64 * x[0]).sin());
            let g = [ScalarField::from_fn(grid, |x| (x[0] / k as f64).cos())];
            ratios.push(commutator_bound_ratio(&h, &g, eps, 1.5).unwrap());
        }
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(max.is_finite() && max < 10.0, "{ratios:?}");
}
