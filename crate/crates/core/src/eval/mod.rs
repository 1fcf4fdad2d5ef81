//! Policy evaluation under the nominal model, the uncertainty ball and
//! perturbed kernels; coverage and class-fit diagnostics; benchmark
//! families; and the randomized dual-versus-primal check.

mod benchmarks;
mod diagnostics;
mod oracle;

pub use benchmarks::{Benchmark, RISKY, SAFE};
pub use diagnostics::{
    concentratability_for, diagnose, estimate_completeness, estimate_concentratability, estimate_dual_gap, mu_coverage,
    DiagnosticsReport, ProbeSettings,
};
pub use oracle::{oracle_check, OracleRow, ORACLE_TOL};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::TvBall;
use crate::error::{Error, Result};
use crate::planner::{default_max_iter, robust_policy_value};
use crate::rmdp::{policy_value_nominal, Policy, TabularRmdp};

/// Stopping tolerance of robust policy evaluation inside the harness.
pub const EVAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// Nominal return under the perturbed kernel.
    pub j: f64,
    /// Largest per-pair TV distance between perturbed and reference kernels.
    pub tv_radius: f64,
    /// Whether every perturbed row lies in the reference ball.
    pub inside_ball: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nominal_j: f64,
    pub robust_j: f64,
    pub sweep: Vec<SweepPoint>,
}

/// Exact worst-case return over the model's own ball.
pub fn robust_j(policy: &Policy, rmdp: &TabularRmdp) -> Result<f64> {
    let ball = TvBall::for_rmdp(rmdp);
    if ball.rho == 0.0 {
        return Ok(policy_value_nominal(policy, rmdp)?.1);
    }
    let (_, j) = robust_policy_value(policy, rmdp, &ball, EVAL_TOL, default_max_iter(rmdp.gamma(), EVAL_TOL))?;
    Ok(j)
}

pub fn evaluate_policy(policy: &Policy, rmdp: &TabularRmdp) -> Result<EvalReport> {
    rmdp.ensure_valid()?;
    let (_, nominal_j) = policy_value_nominal(policy, rmdp)?;
    Ok(EvalReport { nominal_j, robust_j: robust_j(policy, rmdp)?, sweep: Vec::new() })
}

/// Largest `(1/2) |P(.|s,a) - P'(.|s,a)|_1` over all pairs.
pub fn max_tv_distance(a: &TabularRmdp, b: &TabularRmdp) -> Result<f64> {
    if a.n_states() != b.n_states() || a.n_actions() != b.n_actions() {
        return Err(Error::Dimension("kernels have different shapes".into()));
    }
    let ns = a.n_states();
    Ok(a.kernel()
        .chunks(ns)
        .zip(b.kernel().chunks(ns))
        .map(|(p, q)| 0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Nominal return of `policy` on the benchmark rebuilt with `knob` set to each
/// of `values`, with the TV distance of each perturbed kernel from the
/// benchmark's own.
pub fn perturbation_sweep(policy: &Policy, bench: &Benchmark, knob: &str, values: &[f64]) -> Result<Vec<SweepPoint>> {
    let reference = bench.build()?;
    let rho = reference.rho();
    values
        .par_iter()
        .map(|&value| {
            let perturbed = bench
                .with_param(knob, value)
                .and_then(|b| b.build())
                .map_err(|e| Error::InvalidArgument(format!("{knob} = {value}: {e}")))?;
            let tv_radius = max_tv_distance(&reference, &perturbed)?;
            let (_, j) = policy_value_nominal(policy, &perturbed)?;
            Ok(SweepPoint { value, j, tv_radius, inside_ball: tv_radius <= rho + 1e-12 })
        })
        .collect()
}

/// Smallest radius at which the greedy robust action at `state` changes,
/// located by bisection on `[lo, hi]` to within `tol`.
pub fn bisect_policy_flip(bench: &Benchmark, state: usize, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let action = |rho: f64| -> Result<usize> {
        let m = bench.with_param("rho", rho)?.build()?;
        let plan = crate::planner::rqi(&m, &TvBall::for_rmdp(&m), 1e-13, default_max_iter(m.gamma(), 1e-13))?;
        match plan.policy {
            Policy::Deterministic(a) => Ok(a[state]),
            Policy::Stochastic(_) => unreachable!("greedy policies are deterministic"),
        }
    };
    let (mut lo, mut hi) = (lo, hi);
    let left = action(lo)?;
    if action(hi)? == left {
        return Err(Error::InvalidArgument(format!("no policy change on [{lo}, {hi}]")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if action(mid)? == left {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
