//! Exact planning on a known model: robust Q-iteration, robust policy
//! evaluation, and classical value iteration as the non-robust baseline.

use serde::{Deserialize, Serialize};

use crate::dual::{nominal_bellman_apply, robust_bellman_apply, robust_bellman_fixed_policy, TvBall};
use crate::error::{Error, Result};
use crate::rmdp::{greedy_policy, initial_value, Policy, QTable, SaTable, TabularRmdp};

pub const DEFAULT_TOL: f64 = 1e-9;

/// `10 * ceil(log(1/(tol (1-gamma))) / log(1/gamma))`.
pub fn default_max_iter(gamma: f64, tol: f64) -> usize {
    let k = ((1.0 / (tol * (1.0 - gamma))).ln() / (1.0 / gamma).ln()).ceil();
    10 * (k.max(1.0) as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub q: QTable,
    pub policy: Policy,
    /// `sum_s d0(s) max_a Q(s, a)`.
    pub j: f64,
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn check_stopping(tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument(format!("need tol > 0 and max_iter >= 1 (got {tol}, {max_iter})")));
    }
    Ok(())
}

fn iterate(
    rmdp: &TabularRmdp,
    tol: f64,
    max_iter: usize,
    mut step: impl FnMut(&QTable) -> Result<QTable>,
    mut observer: impl FnMut(usize, &QTable),
) -> Result<PlanResult> {
    check_stopping(tol, max_iter)?;
    rmdp.ensure_valid()?;
    let mut q = SaTable::zeros(rmdp.n_states(), rmdp.n_actions());
    observer(0, &q);
    let mut trace = Vec::new();
    let mut converged = false;
    for k in 1..=max_iter {
        let next = step(&q)?;
        let residual = next.sup_distance(&q);
        q = next;
        trace.push(residual);
        observer(k, &q);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    let policy = greedy_policy(&q);
    let j = initial_value(&q, &policy, rmdp.init_dist());
    Ok(PlanResult {
        iterations: trace.len(),
        residual: trace.last().copied().unwrap_or(0.0),
        q,
        policy,
        j,
        trace,
        converged,
    })
}

/// Robust Q-iteration `Q_{k+1} = T Q_k` from `Q_0 = 0`.
///
/// Exhausting `max_iter` is not an error: the partial result comes back with
/// `converged == false`.
pub fn rqi(rmdp: &TabularRmdp, ball: &TvBall, tol: f64, max_iter: usize) -> Result<PlanResult> {
    rqi_observed(rmdp, ball, tol, max_iter, |_, _| {})
}

/// [`rqi`] with a callback receiving every iterate, including `Q_0`.
pub fn rqi_observed(
    rmdp: &TabularRmdp,
    ball: &TvBall,
    tol: f64,
    max_iter: usize,
    observer: impl FnMut(usize, &QTable),
) -> Result<PlanResult> {
    iterate(rmdp, tol, max_iter, |q| robust_bellman_apply(q, rmdp, ball), observer)
}

/// Classical value iteration under the nominal kernel.
pub fn nonrobust_vi(rmdp: &TabularRmdp, tol: f64, max_iter: usize) -> Result<PlanResult> {
    iterate(rmdp, tol, max_iter, |q| nominal_bellman_apply(q, rmdp), |_, _| {})
}

/// Robust value of a fixed policy: the fixed point `Q^pi` of the robust
/// evaluation operator and `J^pi = sum_s d0(s) E_{a~pi(s)} Q^pi(s, a)`.
pub fn robust_policy_value(
    policy: &Policy,
    rmdp: &TabularRmdp,
    ball: &TvBall,
    tol: f64,
    max_iter: usize,
) -> Result<(QTable, f64)> {
    policy.validate(rmdp.n_states(), rmdp.n_actions())?;
    let res = iterate(rmdp, tol, max_iter, |q| robust_bellman_fixed_policy(q, policy, rmdp, ball), |_, _| {})?;
    if !res.converged {
        return Err(Error::NotConverged { iterations: res.iterations, residual: res.residual });
    }
    let j = initial_value(&res.q, policy, rmdp.init_dist());
    Ok((res.q, j))
}

/// [`robust_policy_value`] with the default tolerance and iteration cap.
pub fn robust_policy_value_default(policy: &Policy, rmdp: &TabularRmdp, ball: &TvBall) -> Result<(QTable, f64)> {
    robust_policy_value(policy, rmdp, ball, DEFAULT_TOL, default_max_iter(rmdp.gamma(), DEFAULT_TOL))
}

/// Every deterministic policy, in lexicographic order of the action vector.
pub fn enumerate_deterministic(n_states: usize, n_actions: usize) -> impl Iterator<Item = Policy> {
    let total = (n_actions as u64).checked_pow(n_states as u32).unwrap_or(u64::MAX);
    (0..total).map(move |mut code| {
        let mut acts = vec![0; n_states];
        for slot in acts.iter_mut().rev() {
            *slot = (code % n_actions as u64) as usize;
            code /= n_actions as u64;
        }
        Policy::Deterministic(acts)
    })
}
