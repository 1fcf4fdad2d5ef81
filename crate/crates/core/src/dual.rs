//! The total-variation inner problem `inf { E_P[V] : (1/2)|P - P°|_1 <= rho }`
//! solved two ways, and the robust Bellman operators built on it.
//!
//! The dual route minimizes the convex piecewise-linear function
//!
//! ```text
//! h(eta) = sum_s p0(s) (eta - v(s))_+ - eta + rho (eta - m)_+
//! ```
//!
//! over `eta in [0, 2 / (rho (1 - gamma))]` by enumerating its breakpoints, and
//! returns `-min h`. With `m = min v` this is the general dual; with `m = 0` it
//! is the fail-state form, which only needs nominal expectations. The primal
//! route is a greedy mass transport used as an independent oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rmdp::{value_bound, Policy, QTable, SaTable, TabularRmdp, VTable, PROB_TOL};

/// Below this many `(s, a, s')` terms operator sweeps stay on one thread.
const PAR_THRESHOLD: usize = 1 << 14;

/// The uncertainty ball used by an operator application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvBall {
    pub rho: f64,
    /// Replace `inf_s V(s)` by zero, valid when a fail state pins it there.
    pub use_fail_state_reduction: bool,
}

impl TvBall {
    pub fn new(rho: f64, use_fail_state_reduction: bool) -> Self {
        TvBall { rho, use_fail_state_reduction }
    }

    /// The model's own radius, reducing iff it declares a fail state.
    pub fn for_rmdp(rmdp: &TabularRmdp) -> Self {
        TvBall { rho: rmdp.rho(), use_fail_state_reduction: rmdp.fail_state().is_some() }
    }

    /// Inner infimum value, bypassing the dual when the ball is degenerate.
    pub fn inner_inf(&self, p0: &[f64], v: &[f64], gamma: f64) -> Result<f64> {
        if self.rho == 0.0 {
            Ok(expectation(p0, v))
        } else {
            Ok(tv_inner_inf_dual(p0, v, self, gamma)?.value)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSolution {
    /// `inf_{P in ball} E_P[V]`.
    pub value: f64,
    /// Smallest minimizing `eta`.
    pub eta_star: f64,
    /// Right end of the searched interval.
    pub eta_upper: f64,
}

/// Right end of the dual search interval, `2 / (rho (1 - gamma))`.
///
/// For `rho > 2` that value drops below `1/(1-gamma)` and may cut off the
/// minimizer, so the interval is never allowed to end below the value range.
pub fn dual_eta_upper(rho: f64, gamma: f64) -> f64 {
    (2.0 / (rho * (1.0 - gamma))).max(value_bound(gamma))
}

pub fn expectation(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(p, v)| p * v).sum()
}

fn min_value(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_inner_inputs(p0: &[f64], v: &[f64], rho: f64) -> Result<()> {
    if p0.len() != v.len() || p0.is_empty() {
        return Err(Error::Dimension(format!("p0 has {} entries, v has {}", p0.len(), v.len())));
    }
    let total: f64 = p0.iter().sum();
    if p0.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution(format!("p0 sums to {total}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("value vector has non-finite entries".into()));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius {rho} must be finite and non-negative")));
    }
    Ok(())
}

/// The dual objective `h(eta)`; `m` is `min v` or `0` under the fail-state reduction.
pub fn dual_objective(p0: &[f64], v: &[f64], rho: f64, m: f64, eta: f64) -> f64 {
    let hinge: f64 = p0.iter().zip(v).map(|(p, v)| p * (eta - v).max(0.0)).sum();
    hinge - eta + rho * (eta - m).max(0.0)
}

/// Primal solution by greedy transport: strip up to `rho` mass from the
/// highest-valued states (ties by lowest index) and put it on the lowest-index
/// minimizer of `v`. Returns the infimum and an achieving distribution.
pub fn tv_inner_inf_primal(p0: &[f64], v: &[f64], rho: f64) -> Result<(f64, Vec<f64>)> {
    check_inner_inputs(p0, v, rho)?;
    let vmin = min_value(v);
    let sink = v.iter().position(|x| *x == vmin).unwrap_or(0);
    let mut p = p0.to_vec();
    if rho >= 1.0 {
        p.iter_mut().for_each(|x| *x = 0.0);
        p[sink] = 1.0;
        return Ok((vmin, p));
    }

    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
    let mut budget = rho;
    for &i in &order {
        if budget <= 0.0 || v[i] <= vmin {
            break;
        }
        let moved = p[i].min(budget);
        p[i] -= moved;
        p[sink] += moved;
        budget -= moved;
    }
    Ok((expectation(&p, v), p))
}

/// Dual solution by breakpoint enumeration.
///
/// Rejects `rho <= 0` (the interval is unbounded) and values outside
/// `[0, 1/(1-gamma)]`, where the interval bound is not justified.
pub fn tv_inner_inf_dual(p0: &[f64], v: &[f64], ball: &TvBall, gamma: f64) -> Result<DualSolution> {
    check_inner_inputs(p0, v, ball.rho)?;
    if !(ball.rho > 0.0) {
        return Err(Error::InvalidArgument("dual bound is undefined for rho <= 0".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("discount {gamma} outside (0, 1)")));
    }
    let vmax = value_bound(gamma);
    let slack = 1e-9 * vmax;
    if let Some(x) = v.iter().find(|x| **x < -slack || **x > vmax + slack) {
        return Err(Error::InvalidArgument(format!("value {x} outside [0, {vmax}]")));
    }

    let rho = ball.rho;
    let m = if ball.use_fail_state_reduction { 0.0 } else { min_value(v) };
    let upper = dual_eta_upper(rho, gamma);

    let mut cands: Vec<f64> = Vec::with_capacity(v.len() + 3);
    cands.extend([0.0, upper, m]);
    cands.extend(v.iter().copied());
    cands.retain(|x| (0.0..=upper).contains(x));
    cands.sort_by(f64::total_cmp);
    cands.dedup();

    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));

    // sweep: cum_p, cum_pv accumulate over v(s) < eta
    let (mut k, mut cum_p, mut cum_pv) = (0usize, 0.0f64, 0.0f64);
    let mut best = (f64::INFINITY, 0.0);
    for &eta in &cands {
        while k < order.len() && v[order[k]] < eta {
            cum_p += p0[order[k]];
            cum_pv += p0[order[k]] * v[order[k]];
            k += 1;
        }
        let h = eta * cum_p - cum_pv - eta + rho * (eta - m).max(0.0);
        if h < best.0 {
            best = (h, eta);
        }
    }
    let eta_star = best.1;
    Ok(DualSolution { value: -dual_objective(p0, v, rho, m, eta_star), eta_star, eta_upper: upper })
}

fn sweep_cells(rmdp: &TabularRmdp, cell: impl Fn(usize, usize) -> Result<f64> + Sync) -> Result<QTable> {
    let (ns, na) = (rmdp.n_states(), rmdp.n_actions());
    let work = ns * na * ns;
    let mut out = vec![0.0; ns * na];
    if work >= PAR_THRESHOLD {
        out.par_chunks_mut(na).enumerate().try_for_each(|(s, row)| {
            for (a, x) in row.iter_mut().enumerate() {
                *x = cell(s, a)?;
            }
            Ok::<(), Error>(())
        })?;
    } else {
        for s in 0..ns {
            for a in 0..na {
                out[s * na + a] = cell(s, a)?;
            }
        }
    }
    SaTable::from_vec(ns, na, out)
}

fn check_table_shape(t: &SaTable, rmdp: &TabularRmdp, what: &str) -> Result<()> {
    if t.n_states() != rmdp.n_states() || t.n_actions() != rmdp.n_actions() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, model is {}x{}",
            t.n_states(),
            t.n_actions(),
            rmdp.n_states(),
            rmdp.n_actions()
        )));
    }
    Ok(())
}

fn robust_backup(next_v: &VTable, rmdp: &TabularRmdp, ball: &TvBall) -> Result<QTable> {
    let gamma = rmdp.gamma();
    let hi = rmdp.value_bound();
    let fail = rmdp.fail_state();
    sweep_cells(rmdp, |s, a| {
        if fail == Some(s) {
            return Ok(0.0);
        }
        let inner = ball.inner_inf(rmdp.transition(s, a), next_v.as_slice(), gamma)?;
        Ok((rmdp.reward(s, a) + gamma * inner).clamp(0.0, hi))
    })
}

/// Robust Bellman optimality operator, `(TQ)(s,a) = r + gamma inf_P E_P[max_a' Q]`.
pub fn robust_bellman_apply(q: &QTable, rmdp: &TabularRmdp, ball: &TvBall) -> Result<QTable> {
    check_table_shape(q, rmdp, "Q")?;
    robust_backup(&q.max_per_state(), rmdp, ball)
}

/// Robust evaluation operator for a fixed policy: next-state value `E_{a'~pi} Q(s', a')`.
pub fn robust_bellman_fixed_policy(q: &QTable, policy: &Policy, rmdp: &TabularRmdp, ball: &TvBall) -> Result<QTable> {
    check_table_shape(q, rmdp, "Q")?;
    policy.validate(rmdp.n_states(), rmdp.n_actions())?;
    robust_backup(&q.policy_values(policy), rmdp, ball)
}

/// Non-robust optimality operator under the nominal kernel.
pub fn nominal_bellman_apply(q: &QTable, rmdp: &TabularRmdp) -> Result<QTable> {
    check_table_shape(q, rmdp, "Q")?;
    let v = q.max_per_state();
    let gamma = rmdp.gamma();
    sweep_cells(rmdp, |s, a| Ok(rmdp.reward(s, a) + gamma * expectation(rmdp.transition(s, a), &v.values)))
}

/// `(T_g f)(s,a) = r - gamma (E_{P°}[(g - max_a' f(s',a'))_+] - (1 - rho) g)`.
///
/// No clipping: for a poor `g` the result may leave the value range.
pub fn apply_tg(f: &QTable, g: &SaTable, rmdp: &TabularRmdp, ball: &TvBall) -> Result<QTable> {
    check_table_shape(f, rmdp, "f")?;
    check_table_shape(g, rmdp, "g")?;
    if !(ball.rho > 0.0) {
        return Err(Error::InvalidArgument("T_g needs rho > 0".into()));
    }
    let upper = dual_eta_upper(ball.rho, rmdp.gamma());
    if let Some(x) = g.values().iter().find(|x| !(0.0..=upper).contains(*x)) {
        return Err(Error::InvalidArgument(format!("dual value {x} outside [0, {upper}]")));
    }
    let v = f.max_per_state();
    let gamma = rmdp.gamma();
    let rho = ball.rho;
    sweep_cells(rmdp, |s, a| {
        let eta = g.get(s, a);
        let hinge: f64 = rmdp.transition(s, a).iter().zip(&v.values).map(|(p, v)| p * (eta - v).max(0.0)).sum();
        Ok(rmdp.reward(s, a) - gamma * (hinge - (1.0 - rho) * eta))
    })
}

/// Per-pair minimizing `eta` of the dual for the next-state values of `f`.
pub fn dual_minimizers(f: &QTable, rmdp: &TabularRmdp, ball: &TvBall) -> Result<SaTable> {
    check_table_shape(f, rmdp, "f")?;
    let v = f.max_per_state();
    sweep_cells(rmdp, |s, a| Ok(tv_inner_inf_dual(rmdp.transition(s, a), &v.values, ball, rmdp.gamma())?.eta_star))
}
