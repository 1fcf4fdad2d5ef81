//! Randomized comparison of the dual solver against the primal transport.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{tv_inner_inf_dual, tv_inner_inf_primal, TvBall};
use crate::error::Result;
use crate::rmdp::value_bound;

/// Largest accepted `|dual - primal|`.
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub case: usize,
    pub n: usize,
    pub rho: f64,
    pub gamma: f64,
    /// Whether the dual used `m = 0` (the instance has a zero-valued state).
    pub reduced: bool,
    pub p0: Vec<f64>,
    pub v: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

fn instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, f64, f64, bool) {
    let n = rng.gen_range(1..=12);
    let gamma = rng.gen_range(0.5..0.99);
    let hi = value_bound(gamma);
    // some zero-probability states
    let mut p0: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() }).collect();
    if p0.iter().all(|x| *x == 0.0) {
        p0[0] = 1.0;
    }
    let total: f64 = p0.iter().sum();
    p0.iter_mut().for_each(|x| *x /= total);
    // values from a coarse grid half the time, forcing ties
    let coarse = rng.gen_bool(0.5);
    let mut v: Vec<f64> =
        (0..n).map(|_| if coarse { hi * rng.gen_range(0..4) as f64 / 3.0 } else { rng.gen_range(0.0..=hi) }).collect();
    let reduced = rng.gen_bool(0.3);
    if reduced {
        let k = rng.gen_range(0..n);
        v[k] = 0.0;
    }
    let rho = if rng.gen_bool(0.1) { 1.0 } else { 1.0 - rng.gen::<f64>() };
    (p0, v, rho, gamma, reduced)
}

/// Solves `cases` random inner problems both ways. Instances holding a
/// zero-valued state alternate the dual between `m = min v` and `m = 0`.
pub fn oracle_check(cases: usize, seed: u64) -> Result<Vec<OracleRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|case| {
            let (p0, v, rho, gamma, reduced) = instance(&mut rng);
            let (primal, _) = tv_inner_inf_primal(&p0, &v, rho)?;
            let dual = tv_inner_inf_dual(&p0, &v, &TvBall::new(rho, reduced), gamma)?.value;
            Ok(OracleRow { case, n: v.len(), rho, gamma, reduced, gap: (dual - primal).abs(), p0, v, primal, dual })
        })
        .collect()
}
