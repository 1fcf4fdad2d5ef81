//! Linear function classes for Q functions and dual variables, the dual losses,
//! dual-function ERM, and the least-squares Q regression.

mod erm;
mod features;
mod lsq;
mod samples;

pub use erm::{erm_dual, erm_dual_on, ErmMethod, ErmOptions, ErmReport};
pub use features::{FeatureMap, FeatureSpec, LinearDualClass, LinearQClass};
pub use lsq::{fit_targets, least_squares_nominal_on, least_squares_q, least_squares_q_on, DEFAULT_RIDGE};
pub use samples::{CellSamples, SampleTable, Successor};

use crate::data::Dataset;
use crate::dual::{apply_tg, TvBall};
use crate::error::{Error, Result};
use crate::rmdp::{check_distribution, QTable, SaTable, TabularRmdp};

/// `(1/N) sum_i [(g(s_i,a_i) - max_a' f(s'_i,a'))_+ - (1 - rho) g(s_i,a_i)]`,
/// weighted by the sample weights.
pub fn dual_loss_empirical(g: &SaTable, f: &QTable, dataset: &Dataset, rho: f64) -> Result<f64> {
    let table = SampleTable::from_dataset(dataset)?;
    if g.n_states() != dataset.n_states || g.n_actions() != dataset.n_actions {
        return Err(Error::Dimension("g does not match the dataset shape".into()));
    }
    Ok(table.dual_loss(g, &f.max_per_state().values, rho))
}

/// Population dual loss under `mu` and the nominal kernel, summed exactly.
pub fn dual_loss_population(g: &SaTable, f: &QTable, rmdp: &TabularRmdp, mu: &SaTable, rho: f64) -> Result<f64> {
    check_distribution(mu.values(), rmdp.n_pairs(), "mu")?;
    let v = f.max_per_state();
    let mut total = 0.0;
    for s in 0..rmdp.n_states() {
        for a in 0..rmdp.n_actions() {
            let m = mu.get(s, a);
            if m == 0.0 {
                continue;
            }
            let eta = g.get(s, a);
            let hinge: f64 = rmdp.transition(s, a).iter().zip(&v.values).map(|(p, v)| p * (eta - v).max(0.0)).sum();
            total += m * (hinge - (1.0 - rho) * eta);
        }
    }
    Ok(total)
}

/// Population counterpart of the regression target, `T_g f`, under the fail-state form.
pub fn apply_tg_exact(f: &QTable, g: &SaTable, rmdp: &TabularRmdp, rho: f64) -> Result<QTable> {
    apply_tg(f, g, rmdp, &TvBall::new(rho, true))
}

/// `(sum_{s,a} mu(s,a) |x - y|^p)^(1/p)`.
pub fn mu_norm(x: &SaTable, y: &SaTable, mu: &SaTable, p: f64) -> f64 {
    let total: f64 =
        x.values().iter().zip(y.values()).zip(mu.values()).map(|((a, b), m)| m * (a - b).abs().powf(p)).sum();
    total.powf(1.0 / p)
}
