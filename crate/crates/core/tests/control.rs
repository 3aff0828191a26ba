use impulse_core::catalog;
use impulse_core::control::{
    average_reward, regret, run_data_driven, run_threshold_strategy, ControlledRun, DataDrivenConfig,
    ExplorationSchedule, PeriodKind, StrategyKind, ThresholdStrategy,
};
use impulse_core::problem::{OracleContext, DEFAULT_GRID_N};
use impulse_core::rng::derive_seed;
use impulse_core::stats::Summary;
use proptest::prelude::*;

fn check_all(run: &ControlledRun) {
    run.check_admissible().unwrap();
    run.check_threshold_freezing().unwrap();
    if run.run_meta.strategy == StrategyKind::DataDriven {
        run.check_exploration_record().unwrap();
    }
}

#[test]
fn threshold_rate_matches_renewal_formula() {
    let p = catalog::ou();
    let ctx = OracleContext::new(&p.model).unwrap();
    let y = 1.0;
    let dt: f64 = 1e-3;
    let s = ThresholdStrategy::new(y, &p.reward).unwrap();
    let rates: Vec<f64> = (0..24)
        .map(|k| {
            let run = run_threshold_strategy(&p.model, &p.reward, s, 2000.0, dt, derive_seed(3, k)).unwrap();
            check_all(&run);
            average_reward(&run)
        })
        .collect();
    let sum = Summary::of(&rates);
    let exact = ctx.rate_of_threshold(&p.reward, y).unwrap();
    // discrete monitoring harvests slightly late: allow the rate change over a 2 sqrt(dt) shift
    let shift = ctx.rate_of_threshold(&p.reward, y + 2.0 * dt.sqrt()).unwrap() - exact;
    assert!((sum.mean - exact).abs() <= 4.0 * sum.se + shift.abs(), "mean {} se {} exact {exact}", sum.mean, sum.se);
}

#[test]
fn threshold_harvests_are_at_or_above_the_cut() {
    for p in catalog::all().into_iter().filter(|p| p.model.name != "ou_wide") {
        let s = ThresholdStrategy::new(1.2, &p.reward).unwrap();
        let run = run_threshold_strategy(&p.model, &p.reward, s, 300.0, 1e-3, 5).unwrap();
        check_all(&run);
        assert!(!run.interventions.is_empty());
        assert!(run.interventions.iter().all(|i| i.x_pre >= 1.2 && i.kind == PeriodKind::Exploitation));
        assert!(run.interventions.windows(2).all(|w| w[1].t > w[0].t));
    }
}

#[test]
fn pure_exploration_has_full_regret() {
    let p = catalog::ou();
    let cfg = DataDrivenConfig::new(1e9).unwrap();
    let run = run_data_driven(&p.model, &p.reward, &cfg, 300.0, 1e-3, 2).unwrap();
    check_all(&run);
    assert!(run.threshold_history.is_empty());
    assert_eq!(run.exploration_time, run.total_time);
    assert_eq!(average_reward(&run), 0.0);
    let phi = OracleContext::new(&p.model).unwrap().solve(&p.reward, DEFAULT_GRID_N).unwrap().phi;
    assert_eq!(regret(&p.model, &p.reward, &run).unwrap(), phi);
}

#[test]
fn data_driven_runs_satisfy_invariants_on_catalog() {
    for p in catalog::all().into_iter().filter(|p| p.model.name != "ou_wide") {
        for k in 0..3 {
            let cfg = DataDrivenConfig::new(p.m).unwrap();
            let run = run_data_driven(&p.model, &p.reward, &cfg, 800.0, 1e-3, derive_seed(77, k)).unwrap();
            check_all(&run);
            let sched = cfg.schedule;

            // the exploration clock never runs backwards or ahead of time
            let cps = &run.exploration_checkpoints;
            assert!(cps.windows(2).all(|w| w[1].s_t >= w[0].s_t && w[1].t > w[0].t));
            assert!(cps.iter().all(|c| c.s_t <= c.t + 1e-9));
            assert_eq!(cps.last().unwrap().t, run.total_time);

            // every exploitation period starts with the budget met
            for rec in &run.threshold_history {
                let cp = cps.iter().find(|c| c.t == rec.t).expect("checkpoint at period start");
                assert!(cp.s_t >= sched.target(cp.t), "{} t = {}", p.model.name, cp.t);
                assert!(rec.y_hat >= p.reward.y1 && rec.y_hat <= p.reward.beta);
            }

            // X' is exactly the exploration segments, each y0 -> beta -> y0
            let r = &run.exploration_record;
            for seg in &run.exploration_segments {
                assert_eq!(r[seg.start], p.reward.y0);
                if seg.complete {
                    assert_eq!(r[seg.end], p.reward.y0);
                    let peak = r[seg.start..=seg.end].iter().cloned().fold(f64::MIN, f64::max);
                    assert!(peak >= p.reward.beta);
                    assert!(seg.t_hit_beta.is_some());
                }
            }
            let explored: f64 = run.exploration_segments.iter().map(|s| s.t_end - s.t_start).sum();
            assert!((explored - run.exploration_time).abs() < 1e-6);
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let p = catalog::ou_varvol();
    let cfg = DataDrivenConfig::new(p.m).unwrap();
    let a = run_data_driven(&p.model, &p.reward, &cfg, 1500.0, 1e-3, 31).unwrap();
    let b = run_data_driven(&p.model, &p.reward, &cfg, 1500.0, 1e-3, 31).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    let s = ThresholdStrategy::new(1.0, &p.reward).unwrap();
    let c = run_threshold_strategy(&p.model, &p.reward, s, 500.0, 1e-3, 31).unwrap();
    let d = run_threshold_strategy(&p.model, &p.reward, s, 500.0, 1e-3, 31).unwrap();
    assert_eq!(serde_json::to_vec(&c).unwrap(), serde_json::to_vec(&d).unwrap());
}

#[test]
fn run_json_round_trips() {
    let p = catalog::piecewise();
    let cfg = DataDrivenConfig::new(p.m).unwrap();
    let run = run_data_driven(&p.model, &p.reward, &cfg, 400.0, 1e-3, 12).unwrap();
    let text = serde_json::to_string(&run).unwrap();
    let back: ControlledRun = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["run_meta", "interventions", "threshold_history", "exploration_checkpoints"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v["exploration_checkpoints"][0].get("S_t").is_some());
    for key in ["model", "reward", "schedule", "dt", "seed"] {
        assert!(v["run_meta"].get(key).is_some(), "{key}");
    }
}

#[test]
fn continued_exploration_beats_a_single_estimate() {
    // paired seeds at the largest desk-scale horizon; the naive strategy
    // explores once and then exploits its first estimate forever
    let p = catalog::ou();
    let horizon = 40_000.0;
    let explore = DataDrivenConfig::new(p.m).unwrap();
    let naive = DataDrivenConfig { schedule: ExplorationSchedule::new(1e-9, 1).unwrap(), ..explore.clone() };
    let mut diffs = Vec::new();
    for k in 0..6 {
        let seed = derive_seed(2024, k);
        let a = run_data_driven(&p.model, &p.reward, &explore, horizon, 1e-3, seed).unwrap();
        let b = run_data_driven(&p.model, &p.reward, &naive, horizon, 1e-3, seed).unwrap();
        assert_eq!(b.exploration_segments.len(), 1);
        diffs.push(regret(&p.model, &p.reward, &a).unwrap() - regret(&p.model, &p.reward, &b).unwrap());
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    assert!(mean < 0.0, "data-driven minus naive regret: {diffs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn short_runs_are_admissible(seed: u64, model_idx in 0usize..5, horizon in 20.0f64..200.0, m in 0.05f64..2.0) {
        let p = catalog::all().swap_remove(model_idx);
        prop_assume!(p.model.name != "ou_wide");
        let cfg = DataDrivenConfig::new(m).unwrap();
        let run = run_data_driven(&p.model, &p.reward, &cfg, horizon, 1e-2, seed).unwrap();
        check_all(&run);
        prop_assert!((run.total_time - horizon).abs() < 1e-2 + 1e-9);
        prop_assert!(run.exploration_time <= run.total_time + 1e-9);
    }
}
