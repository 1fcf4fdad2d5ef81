#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_fqi::{Policy, QTable, TabularRmdp};

pub fn distribution(rng: &mut ChaCha8Rng, n: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let mut p: Vec<f64> = (0..n).map(|_| if rng.gen_bool(zero_prob) { 0.0 } else { rng.gen() }).collect();
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|x| *x /= total);
            return p;
        }
    }
}

/// Random model from a seed. With `fail` the last state is an absorbing
/// zero-reward state that the initial distribution avoids.
pub fn model(seed: u64, max_s: usize, max_a: usize, fail: bool) -> TabularRmdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(2..=max_s);
    let na = rng.gen_range(1..=max_a);
    let gamma = rng.gen_range(0.5..0.95);
    let rho = rng.gen_range(0.0..1.0);
    let fail_state = fail.then_some(ns - 1);
    let mut kernel = Vec::new();
    let mut reward = Vec::new();
    for s in 0..ns {
        for _ in 0..na {
            if fail_state == Some(s) {
                kernel.extend((0..ns).map(|j| if j == s { 1.0 } else { 0.0 }));
                reward.push(0.0);
            } else {
                kernel.extend(distribution(&mut rng, ns, 0.3));
                reward.push(rng.gen());
            }
        }
    }
    let mut init = distribution(&mut rng, if fail { ns - 1 } else { ns }, 0.0);
    init.resize(ns, 0.0);
    TabularRmdp::new(ns, na, kernel, reward, gamma, init, fail_state, rho).unwrap()
}

pub fn stochastic_policy(seed: u64, ns: usize, na: usize) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    Policy::Stochastic((0..ns).map(|_| distribution(&mut rng, na, 0.2)).collect())
}

/// Random Q table inside the value range with zero fail-state rows.
pub fn q_table(seed: u64, rmdp: &TabularRmdp) -> QTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let hi = rmdp.value_bound();
    QTable::from_fn(rmdp.n_states(), rmdp.n_actions(), |s, _| {
        if rmdp.fail_state() == Some(s) {
            0.0
        } else {
            rng.gen::<f64>() * hi
        }
    })
}
