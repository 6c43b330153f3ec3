//! Property tests of cheap invariants with closed-form oracles.

use proptest::prelude::*;
use regnoise_core::fft;
use regnoise_core::fracalc::{frac_integral, TimeSeries};
use regnoise_core::gaussian::fbm_covariance;
use regnoise_core::gridcore::{finest_block, lp_multiplier, TimeGrid};
use regnoise_core::math::{tgamma, C64};
use regnoise_core::rng::CounterRng;
use regnoise_core::stats::{linear_fit, median};
use regnoise_core::young::{sew, FnGerm};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_round_trip_and_parseval(log_n in 1u32..10, seed in any::<u64>()) {
        let n = 1usize << log_n;
        let rng = CounterRng::new(seed);
        let x: Vec<C64> = (0..n as u64).map(|i| C64::new(rng.normal(1, 2 * i), rng.normal(1, 2 * i + 1))).collect();
        let mut y = x.clone();
        fft::forward(&mut y).unwrap();
        let energy: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let spectral: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((spectral - n as f64 * energy).abs() <= 1e-9 * n as f64 * energy.max(1.0));
        fft::inverse(&mut y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn block_multipliers_partition_unity(k in 0.0f64..5000.0, log_m in 4u32..14) {
        let finest = finest_block(1usize << log_m);
        let mut sum = 0.0;
        for j in -1..=finest {
            let w = lp_multiplier(j, k, finest);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&w), "block {j}: {w}");
            sum += w;
        }
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fbm_covariance_gives_stationary_increments(h in 0.05f64..0.95, s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let c = |a, b| fbm_covariance(h, a, b);
        prop_assert!((c(s, t) - c(t, s)).abs() < 1e-12);
        prop_assert!((c(t, t) - t.powf(2.0 * h)).abs() < 1e-12);
        let incr = c(t, t) + c(s, s) - 2.0 * c(s, t);
        prop_assert!((incr - (t - s).abs().powf(2.0 * h)).abs() < 1e-10);
    }

    #[test]
    fn sewing_an_exact_increment_returns_the_function(a in -2.0f64..2.0, w in 0.5f64..6.0, log_n in 4u32..9) {
        let n = 1usize << log_n;
        let grid = TimeGrid::unit(1.0, n).unwrap();
        let f = move |t: f64| a * t + (w * t).sin();
        let germ = FnGerm {
            dim: 1,
            gamma: 1.0,
            beta: 1.5,
            f: move |i: usize, j: usize, out: &mut [f64]| out[0] = f(grid.node(j)) - f(grid.node(i)),
        };
        let integral = sew(&germ, grid, 3).unwrap();
        for k in 0..=n {
            prop_assert!((integral.path.values[k] - (f(grid.node(k)) - f(0.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_lines_are_fitted_exactly(slope in -5.0f64..5.0, icpt in -5.0f64..5.0, n in 2usize..40) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.37).collect();
        let ys: Vec<f64> = xs.iter().map(|x| slope * x + icpt).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept - icpt).abs() < 1e-9);
    }

    #[test]
    fn median_ignores_order_and_stays_in_range(mut xs in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        let m = median(&xs);
        xs.reverse();
        prop_assert_eq!(median(&xs), m);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= m && m <= hi);
    }

    #[test]
    fn counter_rng_is_a_pure_function(seed in any::<u64>(), stream in any::<u64>(), idx in any::<u64>()) {
        let u = CounterRng::new(seed).uniform(stream, idx);
        prop_assert!((0.0..1.0).contains(&u));
        prop_assert_eq!(u.to_bits(), CounterRng::new(seed).uniform(stream, idx).to_bits());
        prop_assert!(CounterRng::new(seed).normal(stream, idx).is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// `I^α t^p = Γ(p+1)/Γ(p+1+α) t^{p+α}`.
    #[test]
    fn fractional_integral_of_powers(alpha in 0.1f64..0.9, p in 1.0f64..2.5) {
        let grid = TimeGrid::unit(1.0, 512).unwrap();
        let f = TimeSeries::from_fn(grid, |t| t.powf(p));
        let got = frac_integral(&f, alpha).unwrap();
        let c = tgamma(p + 1.0) / tgamma(p + 1.0 + alpha);
        let worst = (0..=512).map(|k| (got.values[k] - c * grid.node(k).powf(p + alpha)).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-3 * c, "alpha {alpha}, p {p}: {worst}");
    }
}
