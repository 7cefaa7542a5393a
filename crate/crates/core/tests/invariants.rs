use proptest::prelude::*;

use spm_core::ergodics::random_field;
use spm_core::sde::step_implicit;
use spm_core::stats::{batch_means, wilson};
use spm_core::{Grid, NoiseModel, SolverConfig};

fn cfg(eps: f64, dt: f64) -> SolverConfig {
    SolverConfig::new(eps, dt, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn implicit_step_contracts_in_hminus1(
        seed in 0u64..10_000,
        n in 5usize..60,
        eps in 1e-3f64..=1.0,
        dt in 1e-4f64..0.1,
        amp in 0.5f64..8.0,
    ) {
        let grid = Grid::new(n).unwrap();
        let x = random_field(&grid, amp, seed);
        let y = random_field(&grid, amp, seed + 50_000);
        let dw = random_field(&grid, 0.3, seed + 100_000);
        let c = cfg(eps, dt);
        let (sx, sy) = (step_implicit(&x, &dw, &c).unwrap(), step_implicit(&y, &dw, &c).unwrap());
        let before = x.dist_hminus1(&y).unwrap();
        let after = sx.dist_hminus1(&sy).unwrap();
        prop_assert!(after <= before + 1e-8, "{after} > {before}");
    }

    #[test]
    fn implicit_step_preserves_order(
        seed in 0u64..10_000,
        n in 5usize..60,
        eps in 1e-3f64..=1.0,
        dt in 1e-4f64..0.1,
    ) {
        let grid = Grid::new(n).unwrap();
        let x = random_field(&grid, 4.0, seed);
        let y = x.add(&random_field(&grid, 2.0, seed + 1).map(f64::abs)).unwrap();
        let dw = random_field(&grid, 0.5, seed + 2);
        let c = cfg(eps, dt);
        let (sx, sy) = (step_implicit(&x, &dw, &c).unwrap(), step_implicit(&y, &dw, &c).unwrap());
        for (a, b) in sx.values().iter().zip(sy.values()) {
            prop_assert!(a - b <= 1e-10);
        }
    }

    #[test]
    fn implicit_step_conserves_the_increment_mass_balance(
        seed in 0u64..10_000,
        n in 5usize..60,
        eps in 1e-3f64..=1.0,
        dt in 1e-4f64..0.1,
    ) {
        // Y − dtΔ_h F(Y) = X + dW, so (−Δ_h)^{-1}(Y − X − dW) = −dt F(Y)
        let grid = Grid::new(n).unwrap();
        let x = random_field(&grid, 5.0, seed);
        let dw = random_field(&grid, 0.5, seed + 7);
        let c = cfg(eps, dt);
        let y = step_implicit(&x, &dw, &c).unwrap();
        let p = c.yosida().unwrap();
        let lhs = y.sub(&x).unwrap().sub(&dw).unwrap().inverse_laplacian();
        let flux = y.map(|v| p.flux(v));
        for (a, f) in lhs.values().iter().zip(flux.values()) {
            prop_assert!((a + dt * f).abs() <= 1e-7 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(hits in 0usize..500, extra in 0usize..500) {
        let n = hits + extra;
        let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let (lo, hi) = wilson(p, n);
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        if n > 0 && hits > 0 {
            prop_assert!(lo > 0.0);
        }
    }

    #[test]
    fn batch_means_of_constant_series_has_no_error(c in -5.0f64..5.0, len in 30usize..400) {
        let est = batch_means(&vec![c; len], 10);
        prop_assert!((est.mean - c).abs() <= 1e-12);
        prop_assert!(est.std_err.abs() <= 1e-12);
    }

    #[test]
    fn increments_are_keyed_by_seed_and_step(seed in 0u64..1_000, step in 0usize..10_000) {
        let grid = Grid::new(15).unwrap();
        let model = NoiseModel::default_model(&grid, 4, 1.0, 2.0).unwrap();
        let a = model.increment(seed, step, 1e-3);
        prop_assert_eq!(&a, &model.increment(seed, step, 1e-3));
        prop_assert_ne!(&a, &model.increment(seed, step + 1, 1e-3));
        prop_assert_ne!(&a, &model.increment(seed + 1, step, 1e-3));
    }
}
