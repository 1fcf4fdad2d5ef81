//! Probing estimates of the concentrability constant, the completeness error
//! and the dual realizability gap.
//!
//! Each estimate is a maximum over finitely many probes and therefore a lower
//! bound on the quantity it stands for.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{erm_dual_on, ErmOptions, FeatureMap, LinearDualClass, SampleTable};
use crate::data::exhaustive_dataset;
use crate::dual::{dual_minimizers, robust_bellman_apply, TvBall};
use crate::error::{Error, Result};
use crate::planner::{default_max_iter, enumerate_deterministic, rqi_observed, DEFAULT_TOL};
use crate::rmdp::{check_distribution, occupancy, value_bound, Policy, QTable, SaTable, TabularRmdp};

/// Deterministic policies are enumerated when there are at most this many.
const MAX_ENUMERATED: u64 = 4096;
/// Occupancy mass below this counts as unvisited.
const VISIT_TOL: f64 = 1e-12;

fn probe_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_policy(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> Policy {
    // flat Dirichlet rows from normalized exponentials
    let table = (0..n_states)
        .map(|_| {
            let e: Vec<f64> = (0..n_actions).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let total: f64 = e.iter().sum();
            e.iter().map(|x| x / total).collect()
        })
        .collect();
    Policy::Stochastic(table)
}

pub fn mu_coverage(mu: &SaTable) -> f64 {
    mu.values().iter().filter(|x| **x > 0.0).count() as f64 / mu.values().len() as f64
}

/// `max_pi max_{s,a} d_pi(s,a) / mu(s,a)` over the given policies; infinite
/// when some policy visits a pair that `mu` never samples.
pub fn concentratability_for(policies: &[Policy], mu: &SaTable, rmdp: &TabularRmdp) -> Result<f64> {
    check_distribution(mu.values(), rmdp.n_pairs(), "mu")?;
    let ratios: Vec<f64> = policies
        .par_iter()
        .map(|pi| {
            let occ = occupancy(pi, rmdp)?;
            Ok(occ.dist.values().iter().zip(mu.values()).fold(0.0, |acc: f64, (d, m)| {
                if *d <= VISIT_TOL {
                    acc
                } else if *m == 0.0 {
                    f64::INFINITY
                } else {
                    acc.max(d / m)
                }
            }))
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Probes `n_policies` random stochastic policies, plus every deterministic
/// policy when there are at most 4096 of them. The result estimates `sqrt(C)`.
pub fn estimate_concentratability(mu: &SaTable, rmdp: &TabularRmdp, n_policies: usize, seed: u64) -> Result<f64> {
    let (ns, na) = (rmdp.n_states(), rmdp.n_actions());
    let mut policies: Vec<Policy> =
        (0..n_policies).map(|i| random_policy(ns, na, &mut probe_rng(seed, i as u64))).collect();
    let count = (na as u64).checked_pow(ns as u32);
    if count.is_some_and(|c| c <= MAX_ENUMERATED) {
        policies.extend(enumerate_deterministic(ns, na));
    }
    concentratability_for(&policies, mu, rmdp)
}

/// Members of `F` to probe: random weight draws, then RQI iterates spread evenly
/// over the run (always including the last).
fn probe_functions(
    fmap: &FeatureMap,
    rmdp: &TabularRmdp,
    ball: &TvBall,
    n_probes: usize,
    seed: u64,
) -> Result<Vec<QTable>> {
    let hi = value_bound(rmdp.gamma());
    let mut probes: Vec<QTable> = (0..n_probes)
        .map(|i| {
            let mut rng = probe_rng(seed, i as u64);
            let w: Vec<f64> = (0..fmap.dim()).map(|_| rng.gen_range(-hi..=hi)).collect();
            let values = (0..fmap.n_pairs()).map(|c| fmap.predict(c, &w).clamp(0.0, hi)).collect();
            SaTable::from_vec(rmdp.n_states(), rmdp.n_actions(), values)
        })
        .collect::<Result<_>>()?;
    if n_probes > 0 {
        let mut iterates = Vec::new();
        rqi_observed(rmdp, ball, DEFAULT_TOL, default_max_iter(rmdp.gamma(), DEFAULT_TOL), |_, q| {
            iterates.push(q.clone())
        })?;
        let n = iterates.len();
        let take = n_probes.min(n);
        for j in 0..take {
            // evenly spaced indices ending at n - 1
            let idx = if take == 1 { n - 1 } else { j * (n - 1) / (take - 1) };
            probes.push(iterates[idx].clone());
        }
    }
    Ok(probes)
}

/// Weighted least-squares projection onto the span of `fmap`, evaluated and
/// clipped to the value range.
struct Projector {
    fmap: Arc<FeatureMap>,
    mu: Vec<f64>,
    hi: f64,
    /// `(Phi^T M Phi)^+ Phi^T M`, absent for indicator maps.
    solve: Option<DMatrix<f64>>,
}

impl Projector {
    fn new(fmap: Arc<FeatureMap>, mu: &SaTable, hi: f64) -> Self {
        let solve = (!fmap.is_indicator()).then(|| {
            let (n, d) = (fmap.n_pairs(), fmap.dim());
            let mut x = DMatrix::<f64>::zeros(n, d);
            for c in 0..n {
                let sw = mu.values()[c].sqrt();
                for &(j, v) in fmap.row(c) {
                    x[(c, j)] = sw * v;
                }
            }
            let pinv = x.clone().pseudo_inverse(1e-12).expect("non-negative epsilon");
            // w = pinv * (sqrt(mu) o y)
            let mut out = pinv;
            for c in 0..n {
                let sw = mu.values()[c].sqrt();
                out.column_mut(c).scale_mut(sw);
            }
            out
        });
        Projector { fmap, mu: mu.values().to_vec(), hi, solve }
    }

    fn weights(&self, y: &[f64]) -> Vec<f64> {
        match &self.solve {
            Some(m) => (m * DVector::from_column_slice(y)).iter().copied().collect(),
            None => {
                let d = self.fmap.dim();
                let (mut num, mut den) = (vec![0.0; d], vec![0.0; d]);
                for (c, yc) in y.iter().enumerate() {
                    if let Some(&(j, _)) = self.fmap.row(c).first() {
                        num[j] += self.mu[c] * yc;
                        den[j] += self.mu[c];
                    }
                }
                num.iter().zip(&den).map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 }).collect()
            }
        }
    }

    /// `|clip(Phi w) - y|^2_{2,mu}` at the least-squares weights.
    fn residual(&self, y: &[f64]) -> f64 {
        let w = self.weights(y);
        y.iter()
            .enumerate()
            .map(|(c, yc)| {
                let e = self.fmap.predict(c, &w).clamp(0.0, self.hi) - yc;
                self.mu[c] * e * e
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub n_probes: usize,
    pub seed: u64,
}

/// `max_f min_{f'} |f' - T f|^2_{2,mu}` over probe functions `f` of the class.
pub fn estimate_completeness(
    fmap: &Arc<FeatureMap>,
    rmdp: &TabularRmdp,
    ball: &TvBall,
    mu: &SaTable,
    probes: ProbeSettings,
) -> Result<f64> {
    check_distribution(mu.values(), rmdp.n_pairs(), "mu")?;
    check_shape(fmap, rmdp)?;
    let fs = probe_functions(fmap, rmdp, ball, probes.n_probes, probes.seed)?;
    let proj = Projector::new(fmap.clone(), mu, rmdp.value_bound());
    let errs: Vec<f64> = fs
        .par_iter()
        .map(|f| Ok(proj.residual(robust_bellman_apply(f, rmdp, ball)?.values())))
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// `max_f [min_{g in G} L_dual(g; f) - E_mu min_eta (per-pair loss)]` with
/// population losses summed exactly and the inner minimum found by the ERM
/// solver on the population objective.
pub fn estimate_dual_gap(
    gmap: &Arc<FeatureMap>,
    fmap: &FeatureMap,
    rmdp: &TabularRmdp,
    mu: &SaTable,
    rho: f64,
    probes: ProbeSettings,
) -> Result<f64> {
    check_shape(gmap, rmdp)?;
    check_shape(fmap, rmdp)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument("the dual gap needs rho > 0".into()));
    }
    let table = SampleTable::from_dataset(&exhaustive_dataset(rmdp, mu)?)?;
    let ball = TvBall::new(rho, true);
    let fs = probe_functions(fmap, rmdp, &TvBall::for_rmdp(rmdp), probes.n_probes, probes.seed)?;
    let opts = ErmOptions { tol: 1e-8, steps: 20_000, ..ErmOptions::default() };
    let gaps: Vec<f64> = fs
        .par_iter()
        .map(|f| {
            let v = f.max_per_state().values;
            let gclass = LinearDualClass::zeros(gmap.clone(), rho, rmdp.gamma());
            let (_, rep) = erm_dual_on(&table, &v, &gclass, &opts)?;
            let eta = dual_minimizers(f, rmdp, &ball)?;
            Ok((rep.empirical_loss - table.dual_loss(&eta, &v, rho)).max(0.0))
        })
        .collect::<Result<_>>()?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

fn check_shape(fmap: &FeatureMap, rmdp: &TabularRmdp) -> Result<()> {
    if fmap.n_states() != rmdp.n_states() || fmap.n_actions() != rmdp.n_actions() {
        return Err(Error::Dimension("feature map does not match the model".into()));
    }
    Ok(())
}

mod finite_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Num {
            F(f64),
            S(String),
        }
        match Num::deserialize(d)? {
            Num::F(x) => Ok(x),
            Num::S(s) if s == "inf" => Ok(f64::INFINITY),
            Num::S(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

/// All constants are probe-based lower bounds on the true suprema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Estimate of `sqrt(C)`; `"inf"` in JSON when `mu` misses a visited pair.
    #[serde(with = "finite_or_inf")]
    pub c_estimate: f64,
    pub eps_c_estimate: f64,
    pub eps_dual_estimate: f64,
    pub mu_coverage: f64,
    pub n_policies: usize,
    pub n_probes: usize,
    pub seed: u64,
}

pub fn diagnose(
    rmdp: &TabularRmdp,
    mu: &SaTable,
    fmap: &Arc<FeatureMap>,
    gmap: &Arc<FeatureMap>,
    n_policies: usize,
    probes: ProbeSettings,
) -> Result<DiagnosticsReport> {
    rmdp.ensure_valid()?;
    let ball = TvBall::for_rmdp(rmdp);
    let eps_dual_estimate =
        if rmdp.rho() > 0.0 { estimate_dual_gap(gmap, fmap, rmdp, mu, rmdp.rho(), probes)? } else { 0.0 };
    Ok(DiagnosticsReport {
        c_estimate: estimate_concentratability(mu, rmdp, n_policies, probes.seed)?,
        eps_c_estimate: estimate_completeness(fmap, rmdp, &ball, mu, probes)?,
        eps_dual_estimate,
        mu_coverage: mu_coverage(mu),
        n_policies,
        n_probes: probes.n_probes,
        seed: probes.seed,
    })
}
