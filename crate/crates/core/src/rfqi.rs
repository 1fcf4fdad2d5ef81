//! Robust fitted Q-iteration and the non-robust FQI baseline.
//!
//! Both drivers see only the dataset and the model shape. The nominal kernel
//! is never consulted.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::approx::{
    erm_dual_on, least_squares_nominal_on, least_squares_q_on, ErmOptions, FeatureMap, FeatureSpec, LinearDualClass,
    LinearQClass, SampleTable, DEFAULT_RIDGE,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rmdp::{greedy_policy, Policy, QTable, SaTable, TabularRmdp};

/// What an offline learner may know about the model: its dimensions, the
/// discount and which state (if any) is the absorbing zero-reward fail state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpShape {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub fail_state: Option<usize>,
}

impl MdpShape {
    pub fn of(rmdp: &TabularRmdp) -> Self {
        MdpShape {
            n_states: rmdp.n_states(),
            n_actions: rmdp.n_actions(),
            gamma: rmdp.gamma(),
            fail_state: rmdp.fail_state(),
        }
    }

    fn check(&self, dataset: &Dataset) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if dataset.n_states != self.n_states || dataset.n_actions != self.n_actions {
            return Err(Error::Dimension(format!(
                "dataset is {}x{}, model shape is {}x{}",
                dataset.n_states, dataset.n_actions, self.n_states, self.n_actions
            )));
        }
        if let Some(f) = self.fail_state {
            if f >= self.n_states {
                return Err(Error::InvalidArgument(format!("fail state {f} out of range")));
            }
        }
        Ok(())
    }
}

/// `ceil(log(1/(eps (1-gamma))) / log(1/gamma))` with `eps = 1e-3`.
pub fn default_k_iters(gamma: f64) -> usize {
    let eps = 1e-3;
    ((1.0 / (eps * (1.0 - gamma))).ln() / (1.0 / gamma).ln()).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfqiConfig {
    /// Number of alternations `K`; `None` picks [`default_k_iters`].
    pub k_iters: Option<usize>,
    pub rho: f64,
    pub ridge: f64,
    /// Features of the Q class `F`.
    pub features: FeatureSpec,
    /// Features of the dual class `G`; the Q features when absent.
    pub dual_features: Option<FeatureSpec>,
    pub erm: ErmOptions,
    /// Start each ERM from the previous dual weights instead of zero.
    pub warm_start: bool,
    /// Recorded with the result. The drivers are deterministic and draw nothing.
    pub seed: u64,
}

impl Default for RfqiConfig {
    fn default() -> Self {
        RfqiConfig {
            k_iters: None,
            rho: 0.0,
            ridge: DEFAULT_RIDGE,
            features: FeatureSpec::OneHot,
            dual_features: None,
            erm: ErmOptions::default(),
            warm_start: true,
            seed: 0,
        }
    }
}

impl RfqiConfig {
    pub fn resolved_k(&self, gamma: f64) -> usize {
        self.k_iters.unwrap_or_else(|| default_k_iters(gamma))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Empirical dual loss of `g_k`; absent for FQI.
    pub dual_loss: Option<f64>,
    pub regression_residual: f64,
    /// `|Q_{k+1} - Q_k|_inf`.
    pub q_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfqiResult {
    pub algorithm: String,
    pub k_iters: usize,
    pub rho: f64,
    pub seed: u64,
    pub q_final: QTable,
    pub weights: Vec<f64>,
    pub policy: Policy,
    pub per_iteration: Vec<IterationRecord>,
    /// Weights of `g_k`, one entry per iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dual_weights: Vec<Vec<f64>>,
}

/// One alternation `Q_k -> (g_k) -> Q_{k+1}` handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub k: usize,
    pub q_prev: &'a QTable,
    pub g: Option<&'a SaTable>,
    pub q_next: &'a QTable,
}

fn materialize(class: &LinearQClass, shape: &MdpShape) -> QTable {
    let mut q = class.table();
    if let Some(f) = shape.fail_state {
        for a in 0..shape.n_actions {
            q.set(f, a, 0.0);
        }
    }
    q
}

fn wrap(k: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Iteration { iteration: k, source: Box::new(e) }
}

pub fn run_rfqi(dataset: &Dataset, shape: &MdpShape, config: &RfqiConfig) -> Result<RfqiResult> {
    run_rfqi_observed(dataset, shape, config, |_| {})
}

/// [`run_rfqi`] calling `observer` once per alternation.
pub fn run_rfqi_observed(
    dataset: &Dataset,
    shape: &MdpShape,
    config: &RfqiConfig,
    mut observer: impl FnMut(Step<'_>),
) -> Result<RfqiResult> {
    shape.check(dataset)?;
    if !(config.rho > 0.0 && config.rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("RFQI needs rho > 0 (got {}); use FQI for rho = 0", config.rho)));
    }
    let table = SampleTable::from_dataset(dataset)?;
    let (ns, na, gamma) = (shape.n_states, shape.n_actions, shape.gamma);
    let fmap = Arc::new(FeatureMap::from_spec(&config.features, ns, na)?);
    let gmap = match &config.dual_features {
        Some(spec) => Arc::new(FeatureMap::from_spec(spec, ns, na)?),
        None => fmap.clone(),
    };
    let k_iters = config.resolved_k(gamma);

    let mut fclass = LinearQClass::zeros(fmap, gamma);
    let mut gclass = LinearDualClass::zeros(gmap, config.rho, gamma);
    let mut q = materialize(&fclass, shape);
    let mut per_iteration = Vec::with_capacity(k_iters);
    let mut dual_weights = Vec::with_capacity(k_iters);

    for k in 0..k_iters {
        let next_v = q.max_per_state().values;
        if !config.warm_start {
            gclass.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let (g, report) = erm_dual_on(&table, &next_v, &gclass, &config.erm).map_err(wrap(k))?;
        let (fit, residual) = least_squares_q_on(&table, &next_v, &g, &fclass, config.ridge).map_err(wrap(k))?;
        let q_next = materialize(&fit, shape);
        let gt = g.table();
        observer(Step { k, q_prev: &q, g: Some(&gt), q_next: &q_next });
        per_iteration.push(IterationRecord {
            dual_loss: Some(report.empirical_loss),
            regression_residual: residual,
            q_change: q_next.sup_distance(&q),
        });
        dual_weights.push(g.weights.clone());
        gclass = g;
        fclass = fit;
        q = q_next;
    }
    Ok(RfqiResult {
        algorithm: "rfqi".into(),
        k_iters,
        rho: config.rho,
        seed: config.seed,
        policy: greedy_policy(&q),
        q_final: q,
        weights: fclass.weights,
        per_iteration,
        dual_weights,
    })
}

/// Fitted Q-iteration with targets `r + gamma max_a' Q_k(s', a')`. `config.rho`
/// and the ERM settings are ignored.
pub fn run_fqi(dataset: &Dataset, shape: &MdpShape, config: &RfqiConfig) -> Result<RfqiResult> {
    run_fqi_observed(dataset, shape, config, |_| {})
}

pub fn run_fqi_observed(
    dataset: &Dataset,
    shape: &MdpShape,
    config: &RfqiConfig,
    mut observer: impl FnMut(Step<'_>),
) -> Result<RfqiResult> {
    shape.check(dataset)?;
    let table = SampleTable::from_dataset(dataset)?;
    let fmap = Arc::new(FeatureMap::from_spec(&config.features, shape.n_states, shape.n_actions)?);
    let k_iters = config.resolved_k(shape.gamma);
    let mut fclass = LinearQClass::zeros(fmap, shape.gamma);
    let mut q = materialize(&fclass, shape);
    let mut per_iteration = Vec::with_capacity(k_iters);
    for k in 0..k_iters {
        let next_v = q.max_per_state().values;
        let (fit, residual) = least_squares_nominal_on(&table, &next_v, &fclass, config.ridge).map_err(wrap(k))?;
        let q_next = materialize(&fit, shape);
        observer(Step { k, q_prev: &q, g: None, q_next: &q_next });
        per_iteration.push(IterationRecord {
            dual_loss: None,
            regression_residual: residual,
            q_change: q_next.sup_distance(&q),
        });
        fclass = fit;
        q = q_next;
    }
    Ok(RfqiResult {
        algorithm: "fqi".into(),
        k_iters,
        rho: 0.0,
        seed: config.seed,
        policy: greedy_policy(&q),
        q_final: q,
        weights: fclass.weights,
        per_iteration,
        dual_weights: Vec::new(),
    })
}

/// Arguments of the suboptimality bound for RFQI's output policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub k_iters: usize,
    /// Sample count; `f64::INFINITY` drops the statistical term.
    pub n: f64,
    pub gamma: f64,
    pub rho: f64,
    /// Concentrability constant `C`, whose square root bounds the density ratios.
    pub c_conc: f64,
    pub eps_c: f64,
    pub eps_dual: f64,
    /// Cardinalities `|F|` and `|G|`, supplied by the caller.
    pub card_f: f64,
    pub card_g: f64,
    pub delta: f64,
}

/// The three summands of the bound: optimization, approximation, statistical.
pub fn theorem1_terms(b: &BoundInputs) -> Result<[f64; 3]> {
    let bad = |what: &str| Err(Error::InvalidArgument(format!("bound argument out of domain: {what}")));
    if !(b.gamma > 0.0 && b.gamma < 1.0) {
        return bad("gamma must lie in (0, 1)");
    }
    if !(b.rho > 0.0 && b.rho.is_finite()) {
        return bad("rho must be positive");
    }
    if !(b.n > 0.0) {
        return bad("n must be positive");
    }
    if !(b.c_conc > 0.0 && b.c_conc.is_finite()) {
        return bad("C must be positive and finite");
    }
    if !(b.eps_c >= 0.0 && b.eps_dual >= 0.0 && b.eps_c.is_finite() && b.eps_dual.is_finite()) {
        return bad("approximation errors must be finite and non-negative");
    }
    if !(b.card_f >= 1.0 && b.card_g >= 1.0 && b.card_f.is_finite() && b.card_g.is_finite()) {
        return bad("cardinalities must be at least 1");
    }
    if !(b.delta > 0.0 && b.delta < 1.0) {
        return bad("delta must lie in (0, 1)");
    }
    let h = 1.0 - b.gamma;
    let opt = b.gamma.powi(b.k_iters as i32) / (h * h);
    let approx = b.c_conc.sqrt() * ((6.0 * b.eps_c).sqrt() + b.gamma * b.eps_dual) / (h * h);
    let stat = if b.n.is_infinite() {
        0.0
    } else {
        let log_term = (2.0 * b.card_f * b.card_g / b.delta).ln();
        16.0 / (b.rho * h * h * h) * (18.0 * b.c_conc * log_term / b.n).sqrt()
    };
    Ok([opt, approx, stat])
}

pub fn theorem1_bound(b: &BoundInputs) -> Result<f64> {
    let [a, c, d] = theorem1_terms(b)?;
    Ok(a + c + d)
}
