mod common;

use proptest::prelude::*;
use robust_fqi::dual::TvBall;
use robust_fqi::planner::{enumerate_deterministic, robust_policy_value, rqi, rqi_observed};
use robust_fqi::policy_value_nominal;

const TOL: f64 = 1e-12;
const CAP: usize = 100_000;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residuals_decay_geometrically(seed in any::<u64>(), fail in any::<bool>()) {
        let m = common::model(seed, 6, 3, fail);
        let plan = rqi(&m, &TvBall::for_rmdp(&m), TOL, CAP).unwrap();
        prop_assert!(plan.converged);
        for w in plan.trace.windows(2) {
            prop_assert!(w[1] <= m.gamma() * w[0] + 1e-12, "{:?}", w);
        }
    }

    #[test]
    fn fixed_point_shrinks_with_radius(seed in any::<u64>(), fail in any::<bool>(), r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let m = common::model(seed, 6, 3, fail);
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let small = rqi(&m.with_rho(lo), &TvBall::for_rmdp(&m.with_rho(lo)), TOL, CAP).unwrap().q;
        let large = rqi(&m.with_rho(hi), &TvBall::for_rmdp(&m.with_rho(hi)), TOL, CAP).unwrap().q;
        for (a, b) in large.values().iter().zip(small.values()) {
            prop_assert!(*a <= *b + 1e-8);
        }
    }

    #[test]
    fn robust_value_below_nominal(seed in any::<u64>(), fail in any::<bool>()) {
        let m = common::model(seed, 6, 3, fail);
        let pi = common::stochastic_policy(seed, m.n_states(), m.n_actions());
        let (_, robust) = robust_policy_value(&pi, &m, &TvBall::for_rmdp(&m), TOL, CAP).unwrap();
        let (_, nominal) = policy_value_nominal(&pi, &m).unwrap();
        prop_assert!(robust <= nominal + 1e-8);
    }

    #[test]
    fn rqi_policy_beats_every_deterministic_policy(seed in any::<u64>(), fail in any::<bool>()) {
        let m = common::model(seed, 4, 4, fail);
        let ball = TvBall::for_rmdp(&m);
        let plan = rqi(&m, &ball, TOL, CAP).unwrap();
        let (_, best) = robust_policy_value(&plan.policy, &m, &ball, TOL, CAP).unwrap();
        for pi in enumerate_deterministic(m.n_states(), m.n_actions()) {
            let (_, j) = robust_policy_value(&pi, &m, &ball, TOL, CAP).unwrap();
            prop_assert!(j <= best + 1e-7);
        }
    }

    #[test]
    fn fail_row_stays_zero_in_every_iterate(seed in any::<u64>()) {
        let m = common::model(seed, 6, 3, true);
        let sf = m.fail_state().unwrap();
        let mut seen = 0;
        rqi_observed(&m, &TvBall::for_rmdp(&m), TOL, CAP, |_, q| {
            seen += 1;
            assert!(q.row(sf).iter().all(|x| *x == 0.0));
        })
        .unwrap();
        prop_assert!(seen > 1);
    }
}

#[test]
fn planned_value_matches_robust_evaluation_of_its_policy() {
    for seed in 0..10 {
        let m = common::model(seed, 6, 3, seed % 2 == 1);
        let ball = TvBall::for_rmdp(&m);
        let plan = rqi(&m, &ball, TOL, CAP).unwrap();
        let (_, j) = robust_policy_value(&plan.policy, &m, &ball, TOL, CAP).unwrap();
        assert!((plan.j - j).abs() < 1e-9, "seed {seed}: {} vs {j}", plan.j);
    }
}
