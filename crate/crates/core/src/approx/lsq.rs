//! Ridge-regularized least squares onto a linear Q class.

use nalgebra::{DMatrix, DVector};

use super::features::{FeatureMap, LinearDualClass, LinearQClass};
use super::samples::SampleTable;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rmdp::QTable;

pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Solves `min_w sum_i w_i (phi_i . w - y_i)^2 + ridge |w|^2` for targets
/// `y_i = r_i + offset(pair_i, s'_i)` through the normal equations.
/// Returns the weights and the weighted mean squared residual of the
/// unclipped predictions.
pub fn fit_targets(
    table: &SampleTable,
    features: &FeatureMap,
    offset: impl Fn(usize, usize) -> f64,
    ridge: f64,
) -> Result<(Vec<f64>, f64)> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge {ridge} must be finite and non-negative")));
    }
    if features.n_pairs() != table.cells().len() {
        return Err(Error::Dimension("feature map and samples disagree in shape".into()));
    }
    if !(table.total_weight() > 0.0) {
        return Err(Error::EmptyDataset);
    }
    let d = features.dim();
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for (c, cell) in table.cells().iter().enumerate() {
        if cell.weight == 0.0 {
            continue;
        }
        let target_sum: f64 = cell.successors.iter().map(|x| x.wr + x.w * offset(c, x.s_next)).sum();
        let row = features.row(c);
        for &(i, xi) in row {
            b[i] += xi * target_sum;
            for &(j, xj) in row {
                a[(i, j)] += cell.weight * xi * xj;
            }
        }
    }
    for i in 0..d {
        a[(i, i)] += ridge;
    }
    let chol = a.cholesky().ok_or(Error::RankDeficient { ridge })?;
    let w = chol.solve(&b);
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::RankDeficient { ridge });
    }
    let weights: Vec<f64> = w.iter().copied().collect();

    let mut sse = 0.0;
    for (c, cell) in table.cells().iter().enumerate() {
        let pred = features.predict(c, &weights);
        for x in &cell.successors {
            // sum_i w_i (pred - o - r_i)^2 expanded over the aggregated moments
            let e = pred - offset(c, x.s_next);
            sse += x.w * e * e - 2.0 * e * x.wr + x.wr2;
        }
    }
    Ok((weights, (sse / table.total_weight()).max(0.0)))
}

/// Robust regression step: targets
/// `y_i = r_i - gamma (g(s_i,a_i) - max_a' f_prev(s'_i,a'))_+ + gamma (1 - rho) g(s_i,a_i)`.
/// Targets are not clipped; only the returned class clips its evaluations.
pub fn least_squares_q(
    dataset: &Dataset,
    f_prev: &QTable,
    g: &LinearDualClass,
    fclass: &LinearQClass,
    ridge: f64,
) -> Result<(LinearQClass, f64)> {
    let table = SampleTable::from_dataset(dataset)?;
    least_squares_q_on(&table, &f_prev.max_per_state().values, g, fclass, ridge)
}

pub fn least_squares_q_on(
    table: &SampleTable,
    next_v: &[f64],
    g: &LinearDualClass,
    fclass: &LinearQClass,
    ridge: f64,
) -> Result<(LinearQClass, f64)> {
    let gt = g.table();
    let gamma = fclass.gamma;
    let rho = g.rho;
    let offset = |c: usize, sn: usize| {
        let eta = gt.values()[c];
        gamma * ((1.0 - rho) * eta - (eta - next_v[sn]).max(0.0))
    };
    let (weights, residual) = fit_targets(table, &fclass.features, offset, ridge)?;
    Ok((LinearQClass { weights, ..fclass.clone() }, residual))
}

/// Non-robust regression step: targets `y_i = r_i + gamma max_a' f_prev(s'_i, a')`.
pub fn least_squares_nominal_on(
    table: &SampleTable,
    next_v: &[f64],
    fclass: &LinearQClass,
    ridge: f64,
) -> Result<(LinearQClass, f64)> {
    let gamma = fclass.gamma;
    let (weights, residual) = fit_targets(table, &fclass.features, |_, sn| gamma * next_v[sn], ridge)?;
    Ok((LinearQClass { weights, ..fclass.clone() }, residual))
}
