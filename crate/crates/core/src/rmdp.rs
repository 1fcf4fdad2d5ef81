//! Tabular robust MDPs, value tables, policies and discounted occupancies.
//!
//! States and actions are dense indices. Kernels are stored row-major as
//! `kernel[(s * n_actions + a) * n_states + s_next]` and state-action tables
//! as `values[s * n_actions + a]`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Absolute tolerance for stochasticity checks.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance on the total mass of a computed occupancy.
pub const OCCUPANCY_TOL: f64 = 1e-10;

/// Upper end of the value range, `1 / (1 - gamma)`.
pub fn value_bound(gamma: f64) -> f64 {
    1.0 / (1.0 - gamma)
}

/// Finite-state, finite-action RMDP with a total-variation ball of radius `rho`
/// around the nominal kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularRmdp {
    n_states: usize,
    n_actions: usize,
    kernel: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    init_dist: Vec<f64>,
    fail_state: Option<usize>,
    rho: f64,
}

impl TabularRmdp {
    /// Builds a model from flat row-major arrays. Only shapes are checked here;
    /// use [`TabularRmdp::validate`] or [`TabularRmdp::ensure_valid`] for the
    /// probabilistic invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        init_dist: Vec<f64>,
        fail_state: Option<usize>,
        rho: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension("n_states and n_actions must be positive".into()));
        }
        let sa = n_states * n_actions;
        if kernel.len() != sa * n_states {
            return Err(Error::Dimension(format!("kernel has {} entries, expected {}", kernel.len(), sa * n_states)));
        }
        if reward.len() != sa {
            return Err(Error::Dimension(format!("reward has {} entries, expected {sa}", reward.len())));
        }
        if init_dist.len() != n_states {
            return Err(Error::Dimension(format!("init_dist has {} entries, expected {n_states}", init_dist.len())));
        }
        if let Some(sf) = fail_state {
            if sf >= n_states {
                return Err(Error::Dimension(format!("fail_state {sf} out of range")));
            }
        }
        Ok(TabularRmdp { n_states, n_actions, kernel, reward, gamma, init_dist, fail_state, rho })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn fail_state(&self) -> Option<usize> {
        self.fail_state
    }

    pub fn init_dist(&self) -> &[f64] {
        &self.init_dist
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Nominal next-state distribution `P°(· | s, a)`.
    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.kernel[start..start + self.n_states]
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn value_bound(&self) -> f64 {
        value_bound(self.gamma)
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        TabularRmdp { rho, ..self.clone() }
    }

    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        TabularRmdp::new(
            self.n_states,
            self.n_actions,
            kernel,
            self.reward.clone(),
            self.gamma,
            self.init_dist.clone(),
            self.fail_state,
            self.rho,
        )
    }

    pub fn with_rewards(&self, reward: Vec<f64>) -> Result<Self> {
        TabularRmdp::new(
            self.n_states,
            self.n_actions,
            self.kernel.clone(),
            reward,
            self.gamma,
            self.init_dist.clone(),
            self.fail_state,
            self.rho,
        )
    }

    /// Lists every broken invariant; empty iff the model is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            out.push(Violation {
                field: "gamma",
                index: vec![],
                magnitude: self.gamma,
                message: "discount must lie in (0, 1)".into(),
            });
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            out.push(Violation {
                field: "rho",
                index: vec![],
                magnitude: self.rho,
                message: "radius must be finite and non-negative".into(),
            });
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition(s, a);
                if let Some((sn, &p)) = row.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
                    out.push(Violation {
                        field: "kernel",
                        index: vec![s, a, sn],
                        magnitude: p,
                        message: "negative or non-finite probability".into(),
                    });
                }
                let total: f64 = row.iter().sum();
                if !((total - 1.0).abs() <= PROB_TOL) {
                    out.push(Violation {
                        field: "kernel",
                        index: vec![s, a],
                        magnitude: total - 1.0,
                        message: format!("row sums to {total}"),
                    });
                }
                let r = self.reward(s, a);
                if !(0.0..=1.0).contains(&r) {
                    out.push(Violation {
                        field: "reward",
                        index: vec![s, a],
                        magnitude: r,
                        message: "reward outside [0, 1]".into(),
                    });
                }
            }
        }
        let total: f64 = self.init_dist.iter().sum();
        if self.init_dist.iter().any(|p| !(*p >= 0.0)) || !((total - 1.0).abs() <= PROB_TOL) {
            out.push(Violation {
                field: "init_dist",
                index: vec![],
                magnitude: total - 1.0,
                message: format!("not a distribution (sum {total})"),
            });
        }
        if let Some(sf) = self.fail_state {
            for a in 0..self.n_actions {
                let r = self.reward(sf, a);
                if r != 0.0 {
                    out.push(Violation {
                        field: "reward",
                        index: vec![sf, a],
                        magnitude: r,
                        message: "fail state must have zero reward".into(),
                    });
                }
                let stay = self.transition(sf, a)[sf];
                if stay != 1.0 {
                    out.push(Violation {
                        field: "kernel",
                        index: vec![sf, a, sf],
                        magnitude: 1.0 - stay,
                        message: "fail state must be absorbing".into(),
                    });
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: RmdpFile = serde_json::from_str(text)?;
        let rmdp = file.into_rmdp()?;
        rmdp.ensure_valid()?;
        Ok(rmdp)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RmdpFile::from(self))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }
}

/// On-disk JSON layout of an RMDP.
#[derive(Debug, Serialize, Deserialize)]
struct RmdpFile {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rho: f64,
    fail_state: Option<usize>,
    reward: Vec<Vec<f64>>,
    kernel: Vec<Vec<Vec<f64>>>,
    init_dist: Vec<f64>,
}

impl RmdpFile {
    fn into_rmdp(self) -> Result<TabularRmdp> {
        if self.reward.len() != self.n_states || self.reward.iter().any(|r| r.len() != self.n_actions) {
            return Err(Error::Dimension("reward must be [n_states][n_actions]".into()));
        }
        let well_shaped = self.kernel.len() == self.n_states
            && self
                .kernel
                .iter()
                .all(|rows| rows.len() == self.n_actions && rows.iter().all(|p| p.len() == self.n_states));
        if !well_shaped {
            return Err(Error::Dimension("kernel must be [n_states][n_actions][n_states]".into()));
        }
        TabularRmdp::new(
            self.n_states,
            self.n_actions,
            self.kernel.into_iter().flatten().flatten().collect(),
            self.reward.into_iter().flatten().collect(),
            self.gamma,
            self.init_dist,
            self.fail_state,
            self.rho,
        )
    }
}

impl From<&TabularRmdp> for RmdpFile {
    fn from(m: &TabularRmdp) -> Self {
        RmdpFile {
            n_states: m.n_states,
            n_actions: m.n_actions,
            gamma: m.gamma,
            rho: m.rho,
            fail_state: m.fail_state,
            reward: m.reward.chunks(m.n_actions).map(<[f64]>::to_vec).collect(),
            kernel: (0..m.n_states).map(|s| (0..m.n_actions).map(|a| m.transition(s, a).to_vec()).collect()).collect(),
            init_dist: m.init_dist.clone(),
        }
    }
}

/// Dense state-action table. Used for Q functions, dual variables and
/// state-action distributions alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct SaTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

pub type QTable = SaTable;

impl SaTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        SaTable { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "table has {} entries, expected {}",
                values.len(),
                n_states * n_actions
            )));
        }
        Ok(SaTable { n_states, n_actions, values })
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                values.push(f(s, a));
            }
        }
        SaTable { n_states, n_actions, values }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// `V(s) = max_a Q(s, a)`.
    pub fn max_per_state(&self) -> VTable {
        VTable {
            values: (0..self.n_states).map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect(),
        }
    }

    /// `V(s) = E_{a ~ pi(s)} Q(s, a)`.
    pub fn policy_values(&self, policy: &Policy) -> VTable {
        VTable {
            values: (0..self.n_states)
                .map(|s| match policy {
                    Policy::Deterministic(acts) => self.get(s, acts[s]),
                    Policy::Stochastic(rows) => rows[s].iter().zip(self.row(s)).map(|(p, q)| p * q).sum(),
                })
                .collect(),
        }
    }

    pub fn sup_distance(&self, other: &SaTable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Checks the Q-table range `[0, 1/(1-gamma)]` and the zero fail-state row.
    pub fn check_q_range(&self, gamma: f64, fail_state: Option<usize>) -> Result<()> {
        let hi = value_bound(gamma);
        if let Some((i, v)) = self.values.iter().enumerate().find(|(_, v)| !(0.0..=hi).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "Q entry {v} at (s={}, a={}) outside [0, {hi}]",
                i / self.n_actions,
                i % self.n_actions
            )));
        }
        if let Some(sf) = fail_state {
            if self.row(sf).iter().any(|v| *v != 0.0) {
                return Err(Error::InvalidArgument(format!("Q row of fail state {sf} is not zero")));
            }
        }
        Ok(())
    }
}

impl From<SaTable> for Vec<Vec<f64>> {
    fn from(t: SaTable) -> Self {
        t.values.chunks(t.n_actions.max(1)).map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SaTable {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, Self::Error> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err("ragged state-action table".into());
        }
        Ok(SaTable { n_states, n_actions, values: rows.into_iter().flatten().collect() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VTable {
    pub values: Vec<f64>,
}

impl VTable {
    pub fn get(&self, s: usize) -> f64 {
        self.values[s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Markov policy: either one action per state or a full action distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "table", rename_all = "lowercase")]
pub enum Policy {
    Deterministic(Vec<usize>),
    Stochastic(Vec<Vec<f64>>),
}

impl Policy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy::Stochastic(vec![vec![1.0 / n_actions as f64; n_actions]; n_states])
    }

    pub fn n_states(&self) -> usize {
        match self {
            Policy::Deterministic(a) => a.len(),
            Policy::Stochastic(p) => p.len(),
        }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        match self {
            Policy::Deterministic(acts) => {
                if acts[s] == a {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::Stochastic(rows) => rows[s][a],
        }
    }

    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_states() != n_states {
            return Err(Error::Dimension(format!("policy covers {} states, model has {n_states}", self.n_states())));
        }
        match self {
            Policy::Deterministic(acts) => {
                if let Some((s, a)) = acts.iter().enumerate().find(|(_, a)| **a >= n_actions) {
                    return Err(Error::InvalidArgument(format!("action {a} at state {s} out of range")));
                }
            }
            Policy::Stochastic(rows) => {
                for (s, row) in rows.iter().enumerate() {
                    let total: f64 = row.iter().sum();
                    if row.len() != n_actions || row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
                        return Err(Error::InvalidDistribution(format!(
                            "policy row {s} is not a distribution over {n_actions} actions"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mixes with the uniform policy: with probability `epsilon` act uniformly.
    pub fn smoothed(&self, n_actions: usize, epsilon: f64) -> Policy {
        let unif = epsilon / n_actions as f64;
        Policy::Stochastic(
            (0..self.n_states())
                .map(|s| (0..n_actions).map(|a| (1.0 - epsilon) * self.prob(s, a) + unif).collect())
                .collect(),
        )
    }
}

/// Normalized discounted state-action visitation distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub dist: SaTable,
}

impl Occupancy {
    pub fn state_marginal(&self) -> Vec<f64> {
        (0..self.dist.n_states()).map(|s| self.dist.row(s).iter().sum()).collect()
    }
}

/// `pi(s) = argmax_a q(s, a)`, ties to the lowest action index.
pub fn greedy_policy(q: &QTable) -> Policy {
    Policy::Deterministic(
        (0..q.n_states())
            .map(|s| {
                let row = q.row(s);
                let mut best = 0;
                for (a, v) in row.iter().enumerate().skip(1) {
                    if *v > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect(),
    )
}

/// State-to-state matrix `P_pi(s, s') = sum_a pi(a|s) P(s'|s,a)`.
fn policy_kernel(policy: &Policy, rmdp: &TabularRmdp) -> DMatrix<f64> {
    let n = rmdp.n_states();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..rmdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (sn, p) in rmdp.transition(s, a).iter().enumerate() {
                m[(s, sn)] += pa * p;
            }
        }
    }
    m
}

fn solve_dense(a: DMatrix<f64>, b: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let x = a.lu().solve(&b).ok_or_else(|| Error::Singular(what.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("{what}: non-finite solution")));
    }
    Ok(x)
}

/// Discounted occupancy `d(s,a) = (1-gamma) sum_t gamma^t Pr(s_t = s, a_t = a)` of
/// `policy` under the nominal kernel, from the flow system
/// `(I - gamma P_pi^T) x = (1 - gamma) d0`.
pub fn occupancy(policy: &Policy, rmdp: &TabularRmdp) -> Result<Occupancy> {
    policy.validate(rmdp.n_states(), rmdp.n_actions())?;
    let n = rmdp.n_states();
    let gamma = rmdp.gamma();
    let pt = policy_kernel(policy, rmdp).transpose();
    let a = DMatrix::identity(n, n) - pt * gamma;
    let b = DVector::from_iterator(n, rmdp.init_dist().iter().map(|p| (1.0 - gamma) * p));
    let x = solve_dense(a, b, "occupancy flow system")?;
    let dist = SaTable::from_fn(n, rmdp.n_actions(), |s, a| (x[s] * policy.prob(s, a)).max(0.0));
    let total: f64 = dist.values().iter().sum();
    if (total - 1.0).abs() > OCCUPANCY_TOL {
        return Err(Error::Singular(format!("occupancy mass {total} after solve")));
    }
    Ok(Occupancy { dist })
}

/// Exact non-robust evaluation of `policy` under the nominal kernel.
/// Returns `Q_pi` and `J = sum_s d0(s) V_pi(s)`.
pub fn policy_value_nominal(policy: &Policy, rmdp: &TabularRmdp) -> Result<(QTable, f64)> {
    policy.validate(rmdp.n_states(), rmdp.n_actions())?;
    let n = rmdp.n_states();
    let gamma = rmdp.gamma();
    let a = DMatrix::identity(n, n) - policy_kernel(policy, rmdp) * gamma;
    let r_pi = DVector::from_iterator(
        n,
        (0..n).map(|s| (0..rmdp.n_actions()).map(|a| policy.prob(s, a) * rmdp.reward(s, a)).sum::<f64>()),
    );
    let v = solve_dense(a, r_pi, "policy evaluation system")?;
    let q = SaTable::from_fn(n, rmdp.n_actions(), |s, a| {
        let next: f64 = rmdp.transition(s, a).iter().zip(v.iter()).map(|(p, v)| p * v).sum();
        rmdp.reward(s, a) + gamma * next
    });
    let j = rmdp.init_dist().iter().zip(v.iter()).map(|(d, v)| d * v).sum();
    Ok((q, j))
}

/// `J = sum_s d0(s) E_{a ~ pi(s)} Q(s, a)`.
pub fn initial_value(q: &QTable, policy: &Policy, init_dist: &[f64]) -> f64 {
    let v = q.policy_values(policy);
    init_dist.iter().zip(&v.values).map(|(d, v)| d * v).sum()
}

/// Validates a flat `[n_states * n_actions]` distribution.
pub fn check_distribution(p: &[f64], len: usize, what: &str) -> Result<()> {
    if p.len() != len {
        return Err(Error::Dimension(format!("{what} has {} entries, expected {len}", p.len())));
    }
    if let Some(x) = p.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidDistribution(format!("{what} has entry {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution(format!("{what} sums to {total}")));
    }
    Ok(())
}
