mod common;

use proptest::prelude::*;
use robust_fqi::eval::{concentratability_for, estimate_concentratability, perturbation_sweep, robust_j, Benchmark};
use robust_fqi::planner::enumerate_deterministic;
use robust_fqi::{occupancy, Policy};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn robust_return_falls_as_radius_grows(seed in any::<u64>(), fail in any::<bool>(), mut radii in prop::collection::vec(0.0f64..1.0, 4)) {
        let m = common::model(seed, 5, 3, fail);
        let pi = common::stochastic_policy(seed, m.n_states(), m.n_actions());
        radii.sort_by(f64::total_cmp);
        let js: Vec<f64> = radii.iter().map(|r| robust_j(&pi, &m.with_rho(*r)).unwrap()).collect();
        for w in js.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "{:?}", js);
        }
    }

    #[test]
    fn tested_occupancy_gives_ratio_at_least_one(seed in any::<u64>(), fail in any::<bool>()) {
        let m = common::model(seed, 4, 3, fail);
        let pi = common::stochastic_policy(seed, m.n_states(), m.n_actions());
        let mu = occupancy(&pi, &m).unwrap().dist;
        let c = concentratability_for(&[pi], &mu, &m).unwrap();
        prop_assert!(c >= 1.0 - 1e-9, "{c}");
    }
}

#[test]
fn enumerated_policy_occupancy_gives_ratio_at_least_one() {
    for seed in 0..10 {
        let m = common::model(seed, 4, 3, seed % 2 == 0);
        let count = m.n_actions().pow(m.n_states() as u32);
        let pi = enumerate_deterministic(m.n_states(), m.n_actions()).nth(seed as usize % count).unwrap();
        let mu = occupancy(&pi, &m).unwrap().dist;
        // enumeration includes pi, so the estimate of sqrt(C) is at least 1
        let c = estimate_concentratability(&mu, &m, 8, seed).unwrap();
        assert!(c >= 1.0 - 1e-9, "seed {seed}: {c}");
    }
}

#[test]
fn sweep_points_inside_the_ball_are_no_worse_than_robust_return() {
    let benches = [
        Benchmark::chain(5).with_param("fail_prob", 0.05).unwrap().with_param("rho", 0.15).unwrap(),
        Benchmark::gridworld(3, 3).with_param("rho", 0.2).unwrap(),
        Benchmark::risky_safe(),
    ];
    for bench in benches {
        let m = bench.build().unwrap();
        let (knob, values): (&str, Vec<f64>) = match bench {
            Benchmark::RiskySafe { .. } => ("fail_prob", (0..=25).map(|i| i as f64 * 0.02).collect()),
            _ => ("slip", (0..=25).map(|i| i as f64 * 0.02).collect()),
        };
        let policies =
            [Policy::uniform(m.n_states(), m.n_actions()), common::stochastic_policy(3, m.n_states(), m.n_actions())];
        for pi in policies {
            let floor = robust_j(&pi, &m).unwrap();
            let points = perturbation_sweep(&pi, &bench, knob, &values).unwrap();
            assert!(points.iter().any(|p| p.inside_ball));
            for p in points.iter().filter(|p| p.inside_ball) {
                assert!(p.j >= floor - 1e-8, "{} {knob}={}: {} < {floor}", bench.name(), p.value, p.j);
            }
        }
    }
}
