//! Empirical risk minimization of the dual loss over a linear class `G`.
//!
//! Indicator feature maps (one-hot, state aggregation, constants) make the
//! loss separable across coordinates, and each coordinate is a 1-D convex
//! piecewise-linear function whose smallest minimizer is found exactly at a
//! breakpoint. Every other map goes through full-batch projected subgradient
//! descent with normalized steps `c / sqrt(t)` and iterate averaging.

use serde::{Deserialize, Serialize};

use super::features::{FeatureMap, LinearDualClass};
use super::samples::SampleTable;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rmdp::{value_bound, QTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErmMethod {
    /// Exact breakpoint search for indicator maps, subgradient otherwise.
    Auto,
    /// Always run the subgradient method.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErmOptions {
    /// Subgradient step budget.
    pub steps: usize,
    /// Multiplier `c` of the `c / sqrt(t)` schedule, in units of `1/(1-gamma)`.
    pub step_scale: f64,
    /// Stop once the best loss improves by less than this over a window.
    pub tol: f64,
    /// Epochs of consecutive loss increase tolerated before declaring divergence.
    pub patience: usize,
    pub method: ErmMethod,
}

impl Default for ErmOptions {
    fn default() -> Self {
        ErmOptions { steps: 5000, step_scale: 1.0, tol: 1e-10, patience: 20, method: ErmMethod::Auto }
    }
}

const EPOCH: usize = 50;
const STALL_WINDOW: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmReport {
    pub final_weights: Vec<f64>,
    pub empirical_loss: f64,
    pub iterations: usize,
    pub step_size_schedule: String,
    pub loss_trace: Vec<f64>,
}

/// Minimizes the empirical dual loss `L_dual(g; f)` over the class of `gclass`,
/// warm-started from its current weights.
pub fn erm_dual(
    dataset: &Dataset,
    f: &QTable,
    gclass: &LinearDualClass,
    opts: &ErmOptions,
) -> Result<(LinearDualClass, ErmReport)> {
    let table = SampleTable::from_dataset(dataset)?;
    erm_dual_on(&table, &f.max_per_state().values, gclass, opts)
}

/// [`erm_dual`] on a compiled table with next-state values `v(s') = max_a' f(s', a')`.
pub fn erm_dual_on(
    table: &SampleTable,
    next_v: &[f64],
    gclass: &LinearDualClass,
    opts: &ErmOptions,
) -> Result<(LinearDualClass, ErmReport)> {
    let fm = &gclass.features;
    if fm.n_pairs() != table.cells().len() || next_v.len() != table.n_states() {
        return Err(Error::Dimension("dual class, samples and values disagree in shape".into()));
    }
    if !(table.total_weight() > 0.0) {
        return Err(Error::EmptyDataset);
    }
    if !(gclass.rho > 0.0) {
        return Err(Error::InvalidArgument("dual ERM needs rho > 0".into()));
    }
    let (weights, iterations, schedule, trace) = if fm.is_indicator() && opts.method == ErmMethod::Auto {
        let w = breakpoint_weights(table, next_v, fm, gclass.rho, gclass.clip_hi());
        let loss = loss_at(table, next_v, fm, &w, gclass);
        (w, 1, "exact breakpoint search per coordinate".to_string(), vec![loss])
    } else {
        subgradient(table, next_v, gclass, opts)?
    };
    let g = LinearDualClass { weights, ..gclass.clone() };
    let empirical_loss = table.dual_loss(&g.table(), next_v, g.rho);
    let report = ErmReport {
        final_weights: g.weights.clone(),
        empirical_loss,
        iterations,
        step_size_schedule: schedule,
        loss_trace: trace,
    };
    Ok((g, report))
}

fn loss_at(table: &SampleTable, next_v: &[f64], fm: &FeatureMap, w: &[f64], g: &LinearDualClass) -> f64 {
    let hi = g.clip_hi();
    let total: f64 =
        (0..fm.n_pairs()).map(|c| table.cell_dual_loss(c, fm.predict(c, w).clamp(0.0, hi), next_v, g.rho)).sum();
    total / table.total_weight()
}

/// Smallest minimizer of `sum_k w_k (eta - y_k)_+ - (1 - rho) W eta` on `[0, hi]`,
/// i.e. the first candidate whose right slope `sum_{y_k <= eta} w_k - (1-rho) W`
/// is non-negative.
pub(crate) fn scalar_hinge_minimizer(points: &mut [(f64, f64)], rho: f64, hi: f64) -> f64 {
    let total: f64 = points.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        return 0.0;
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let target = (1.0 - rho) * total;
    let mut cum = 0.0;
    let mut k = 0;
    let mut eta = 0.0;
    loop {
        while k < points.len() && points[k].0 <= eta {
            cum += points[k].1;
            k += 1;
        }
        if cum >= target {
            return eta;
        }
        match points[k..].iter().find(|p| p.0 > eta) {
            Some(p) if p.0 < hi => eta = p.0,
            _ => return hi,
        }
    }
}

fn breakpoint_weights(table: &SampleTable, next_v: &[f64], fm: &FeatureMap, rho: f64, hi: f64) -> Vec<f64> {
    let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); fm.dim()];
    for (c, cell) in table.cells().iter().enumerate() {
        if let Some(&(j, _)) = fm.row(c).first() {
            groups[j].extend(cell.successors.iter().map(|x| (next_v[x.s_next], x.w)));
        }
    }
    groups.iter_mut().map(|pts| scalar_hinge_minimizer(pts, rho, hi)).collect()
}

type SubgradientOutcome = (Vec<f64>, usize, String, Vec<f64>);

fn subgradient(
    table: &SampleTable,
    next_v: &[f64],
    gclass: &LinearDualClass,
    opts: &ErmOptions,
) -> Result<SubgradientOutcome> {
    let fm = &gclass.features;
    let hi = gclass.clip_hi();
    let rho = gclass.rho;
    let d = fm.dim();
    let row_norm = (0..fm.n_pairs())
        .map(|c| fm.row(c).iter().map(|(_, x)| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let c0 = opts.step_scale * value_bound(gclass.gamma) / row_norm;
    // box keeping any single coordinate able to span the clip range ten times over
    let bound = 10.0 * hi / fm.min_abs_entry().max(f64::MIN_POSITIVE);
    let project = |w: &mut [f64]| w.iter_mut().for_each(|x| *x = x.clamp(-bound, bound));

    let mut w = gclass.weights.clone();
    project(&mut w);
    let mut avg = w.clone();
    let mut best_loss = loss_at(table, next_v, fm, &w, gclass);
    let mut best = w.clone();
    let mut trace = Vec::with_capacity(opts.steps);
    let mut grad = vec![0.0; d];
    let (mut epoch_sum, mut prev_epoch, mut rising) = (0.0, f64::INFINITY, 0usize);
    let mut stall_ref = best_loss;
    let mut steps_done = 0;

    for t in 1..=opts.steps {
        grad.iter_mut().for_each(|x| *x = 0.0);
        for (c, cell) in table.cells().iter().enumerate() {
            if cell.weight == 0.0 {
                continue;
            }
            let pre = fm.predict(c, &w);
            let g = pre.clamp(0.0, hi);
            // hinge derivative with the convention d(x)_+ = 0 at x = 0
            let above: f64 = cell.successors.iter().filter(|x| g - next_v[x.s_next] > 0.0).map(|x| x.w).sum();
            let dg = (above - (1.0 - rho) * cell.weight) / table.total_weight();
            let active = (pre > 0.0 && pre < hi) || (pre <= 0.0 && dg < 0.0) || (pre >= hi && dg > 0.0);
            if active {
                for &(j, x) in fm.row(c) {
                    grad[j] += dg * x;
                }
            }
        }
        let norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        steps_done = t;
        if norm == 0.0 {
            break;
        }
        let step = c0 / (t as f64).sqrt() / norm;
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= step * gj;
        }
        project(&mut w);
        let k = t as f64;
        for (a, x) in avg.iter_mut().zip(&w) {
            *a += (x - *a) / (k + 1.0);
        }

        let l_iter = loss_at(table, next_v, fm, &w, gclass);
        let l_avg = loss_at(table, next_v, fm, &avg, gclass);
        if !l_iter.is_finite() || !l_avg.is_finite() {
            return Err(Error::Divergence { step: t, loss: l_iter });
        }
        if l_iter < best_loss {
            best_loss = l_iter;
            best.copy_from_slice(&w);
        }
        if l_avg < best_loss {
            best_loss = l_avg;
            best.copy_from_slice(&avg);
        }
        trace.push(l_avg);

        epoch_sum += l_iter;
        if t % EPOCH == 0 {
            let epoch = epoch_sum / EPOCH as f64;
            rising = if epoch > prev_epoch { rising + 1 } else { 0 };
            if rising >= opts.patience {
                return Err(Error::Divergence { step: t, loss: epoch });
            }
            prev_epoch = epoch;
            epoch_sum = 0.0;
        }
        if t % STALL_WINDOW == 0 {
            if stall_ref - best_loss < opts.tol {
                break;
            }
            stall_ref = best_loss;
        }
    }
    let schedule = format!("normalized subgradient, step {c0:.6e} / sqrt(t), averaged iterates");
    Ok((best, steps_done, schedule, trace))
}
