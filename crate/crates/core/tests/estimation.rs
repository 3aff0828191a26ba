mod common;

use common::{ou_density, ou_xi, ou_xi_base, simpson};
use impulse_core::catalog;
use impulse_core::diffusion::{simulate_path, InnerLimit, InvariantDensityOracle, XiTable};
use impulse_core::estimation::{
    build_xi_estimate, density_from_config, estimate_from_occupation, estimate_threshold, kernel_density_estimate,
    xi_from_density, Density, DensityEstimate, DensityKind, EstimatorConfig, KernelSpec, Occupation,
};
use impulse_core::problem::{solve_oracle, OracleContext, DEFAULT_GRID_N};
use proptest::prelude::*;

#[test]
fn shipped_kernels_satisfy_moment_conditions() {
    for k in [KernelSpec::epanechnikov(), KernelSpec::order3()] {
        k.validate().unwrap();
        let m = |j: i32| simpson(|u| u.powi(j) * k.eval(u), -0.5, 0.5, 2000);
        assert!((m(0) - 1.0).abs() < 1e-12, "{}", k.name);
        for j in 1..=k.order as i32 {
            assert!(m(j).abs() < 1e-12, "{} moment {j}", k.name);
        }
        assert!(m(k.order as i32 + 1).abs() > 1e-4, "{}: order is sharp", k.name);
        assert_eq!(k.eval(0.5001), 0.0);
        assert_eq!(k.eval(-0.7), 0.0);
        assert!((k.cdf(0.5) - 1.0).abs() < 1e-12);
        assert!((k.cdf(0.1) - simpson(|u| k.eval(u), -0.5, 0.1, 2000)).abs() < 1e-12);
    }
}

#[test]
fn invalid_kernels_are_rejected() {
    // not normalised
    assert!(KernelSpec::new("half", vec![0.75, 0.0, -3.0], 0.5, 1, 1e-12).is_err());
    // asymmetric
    assert!(KernelSpec::new("tilted", vec![1.0, 0.5], 0.5, 1, 1e-12).is_err());
    // claims a vanishing second moment it does not have
    assert!(KernelSpec::new("epa3", vec![1.5, 0.0, -6.0], 0.5, 3, 1e-12).is_err());
}

#[test]
fn plug_in_with_exact_density_is_the_truncated_xi() {
    for p in catalog::all() {
        let oracle = InvariantDensityOracle::new(&p.model).unwrap();
        let r = &p.reward;
        for inner in [InnerLimit::BaseLevel, InnerLimit::MinusInfinity] {
            let table = XiTable::new(&oracle, r.y0, inner, r.beta).unwrap();
            // keep the floor below the true minimum so it never binds
            let a = 0.5 * oracle.min_density_on(r.y0, r.beta);
            let est = build_xi_estimate(&oracle, &p.model.sigma, r.y0, a, 1e-9, inner, r.beta, 0.01).unwrap();
            for y in (0..=97).map(|i| r.y1 + (r.beta - r.y1) * i as f64 / 97.0) {
                let want = table.xi(y).unwrap();
                let got = est.raw(y);
                assert!(((got - want) / want).abs() < 1e-6, "{} {inner:?} y = {y}: {got} vs {want}", p.model.name);
            }
            // below y1 xi vanishes at y0, so scale the tolerance by xi(y1)
            let scale = table.xi(r.y1).unwrap();
            for y in (0..=31).map(|i| r.y0 + (r.y1 - r.y0) * i as f64 / 31.0) {
                let err = (est.raw(y) - table.xi(y).unwrap()).abs();
                assert!(err < 1e-6 * scale, "{} {inner:?} y = {y}: error {err}", p.model.name);
            }
        }
    }
}

#[test]
fn plug_in_with_exact_ou_density_matches_closed_forms() {
    let p = catalog::ou();
    let oracle = InvariantDensityOracle::new(&p.model).unwrap();
    let base = build_xi_estimate(&oracle, &p.model.sigma, 0.0, 1e-3, 1e-9, InnerLimit::BaseLevel, 1.5, 0.01).unwrap();
    let full = build_xi_estimate(&oracle, &p.model.sigma, 0.0, 1e-3, 1e-9, InnerLimit::MinusInfinity, 1.5, 0.01).unwrap();
    for y in [0.3, 0.5, 0.77, 1.0, 1.25, 1.5] {
        assert!(((base.raw(y) - ou_xi_base(y)) / ou_xi_base(y)).abs() < 1e-6, "y = {y}");
        assert!(((full.raw(y) - ou_xi(y)) / ou_xi(y)).abs() < 1e-6, "y = {y}");
    }
}

#[test]
fn exact_density_recovers_oracle_threshold() {
    for p in catalog::all() {
        let oracle = InvariantDensityOracle::new(&p.model).unwrap();
        let sol = solve_oracle(&p.model, &p.reward, DEFAULT_GRID_N).unwrap();
        let cfg = EstimatorConfig::default();
        let xi = xi_from_density(&oracle, 0.01, &p.model, &p.reward, &cfg).unwrap();
        let (y_hat, value_hat) = estimate_threshold(&xi, &p.reward, DEFAULT_GRID_N).unwrap();
        assert!((y_hat - sol.y_star).abs() <= sol.grid_step() + 1e-12, "{}", p.model.name);
        assert!(((value_hat - sol.phi) / sol.phi).abs() < 1e-5, "{}", p.model.name);
    }
}

#[test]
fn kernel_and_local_time_estimates_agree_with_truth() {
    let p = catalog::ou();
    let oracle = InvariantDensityOracle::new(&p.model).unwrap();
    let x0 = 0.3;
    let path = simulate_path(&p.model, x0, 3000.0, 1e-3, 4242).unwrap();
    let occ = Occupation::from_path(&path).unwrap();
    let kernel = density_from_config(&occ, &p.model, &EstimatorConfig::default()).unwrap();
    let lt_cfg = EstimatorConfig { density: DensityKind::LocalTime, ..EstimatorConfig::default() };
    let local = density_from_config(&occ, &p.model, &lt_cfg).unwrap();
    let l1 = |f: &dyn Fn(f64) -> f64| simpson(f, -2.0, 2.0, 4000);
    let k_err = l1(&|x| (kernel.density(x) - ou_density(x)).abs());
    let l_err = l1(&|x| (local.density(x) - ou_density(x)).abs());
    let gap = l1(&|x| (kernel.density(x) - local.density(x)).abs());
    assert!(k_err < 0.1, "kernel L1 error {k_err}");
    assert!(l_err < 0.1, "local-time L1 error {l_err}");
    assert!(gap < 0.1, "estimators disagree by {gap}");
    // both are occupation densities: their mass is close to one
    assert!((l1(&|x| kernel.density(x)) - (oracle.cdf(2.0) - oracle.cdf(-2.0))).abs() < 0.05);
}

#[test]
fn scaling_the_reward_scales_the_estimate_exactly() {
    let p = catalog::tanh();
    let path = simulate_path(&p.model, 0.0, 400.0, 1e-3, 8).unwrap();
    let occ = Occupation::from_path(&path).unwrap();
    let cfg = EstimatorConfig::default();
    let base = estimate_from_occupation(&occ, &p.model, &p.reward, &cfg).unwrap();
    for c in [0.02, 3.0, 250.0] {
        let scaled = estimate_from_occupation(&occ, &p.model, &p.reward.scaled(c).unwrap(), &cfg).unwrap();
        assert_eq!(scaled.y_hat, base.y_hat);
        assert_eq!(scaled.value_hat, c * base.value_hat);
    }
}

#[test]
fn threshold_regret_is_nonnegative_and_shrinks() {
    let p = catalog::ou();
    let ctx = OracleContext::new(&p.model).unwrap();
    let sol = ctx.solve(&p.reward, DEFAULT_GRID_N).unwrap();
    let cfg = EstimatorConfig::default();
    let mean_regret = |horizon: f64| {
        let regrets: Vec<f64> = (0..12)
            .map(|k| {
                let path = simulate_path(&p.model, 0.0, horizon, 1e-3, 1000 + k).unwrap();
                let occ = Occupation::from_path(&path).unwrap();
                let est = estimate_from_occupation(&occ, &p.model, &p.reward, &cfg).unwrap();
                sol.phi - ctx.rate_of_threshold(&p.reward, est.y_hat).unwrap()
            })
            .collect();
        assert!(regrets.iter().all(|&r| r >= 0.0));
        regrets.iter().sum::<f64>() / regrets.len() as f64
    };
    assert!(mean_regret(2000.0) < mean_regret(100.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn xi_hat_is_floored_and_monotone(seed: u64, model_idx in 0usize..5, horizon in 5.0f64..60.0) {
        let p = catalog::all().swap_remove(model_idx);
        let r = &p.reward;
        let path = simulate_path(&p.model, r.y0, horizon, 1e-2, seed).unwrap();
        let occ = Occupation::from_path(&path).unwrap();
        let cfg = EstimatorConfig::default();
        let density = density_from_config(&occ, &p.model, &cfg).unwrap();
        let xi = xi_from_density(&density, density.summary().resolution, &p.model, r, &cfg).unwrap();
        let ys = r.grid(200);
        let vals: Vec<f64> = ys.iter().map(|&y| xi.eval(y)).collect();
        prop_assert!(vals.iter().all(|&v| v >= r.m1));
        prop_assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        let (y_hat, _) = estimate_threshold(&xi, r, 64).unwrap();
        prop_assert!(y_hat >= r.y1 && y_hat <= r.beta);
    }

    #[test]
    fn fast_kernel_sum_matches_direct_sum(seed: u64, x in -2.0f64..2.0, h in 0.01f64..0.5) {
        let p = catalog::ou();
        let path = simulate_path(&p.model, 0.0, 20.0, 1e-2, seed).unwrap();
        let occ = Occupation::from_path(&path).unwrap();
        for kernel in [KernelSpec::epanechnikov(), KernelSpec::order3()] {
            let est = DensityEstimate::kernel(&occ, kernel.clone(), h).unwrap();
            // left-endpoint sum over the raw path, written out by hand; estimates
            // are clipped at zero (the order-3 kernel has negative lobes)
            let n = path.values.len() - 1;
            let raw: f64 = path.values[..n].iter().map(|xi| kernel.eval((x - xi) / h)).sum::<f64>() / (n as f64 * h);
            let direct = raw.max(0.0);
            prop_assert!((est.density(x) - direct).abs() < 1e-9 * (1.0 + direct), "fast {} direct {} {}", est.density(x), direct, kernel.name);
            let by_fn = kernel_density_estimate(&path, &kernel, h, x).unwrap();
            prop_assert!((by_fn - direct).abs() < 1e-9 * (1.0 + direct));
        }
    }
}
