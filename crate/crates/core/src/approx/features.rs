use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dual::dual_eta_upper;
use crate::error::{Error, Result};
use crate::rmdp::{value_bound, SaTable};

/// Serializable description of a feature map, resolved against a model shape
/// by [`FeatureMap::from_spec`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureSpec {
    /// Identity features, `d = |S| |A|`.
    #[default]
    OneHot,
    /// A single all-ones column.
    Constant,
    /// Row `s * |A| + a` is the unit vector `e_{index[s][a]}`.
    IndicatorTable { index: Vec<Vec<usize>> },
    /// Dense matrix with `|S| |A|` rows.
    Custom { matrix: Vec<Vec<f64>> },
    /// Dense matrix read from a JSON file holding `[[f64]]`.
    MatrixFile { path: String },
}

/// Linear feature map `phi(s, a) in R^d`, stored sparsely by row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
    indicator: bool,
}

impl FeatureMap {
    pub fn one_hot(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        FeatureMap { n_states, n_actions, dim: n, rows: (0..n).map(|i| vec![(i, 1.0)]).collect(), indicator: true }
    }

    pub fn constant(n_states: usize, n_actions: usize) -> Self {
        Self::indicator(n_states, n_actions, vec![0; n_states * n_actions]).expect("constant map is valid")
    }

    /// Aggregation features: pair `i` activates coordinate `index[i]` only.
    pub fn indicator(n_states: usize, n_actions: usize, index: Vec<usize>) -> Result<Self> {
        if index.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "indicator table has {} entries, expected {}",
                index.len(),
                n_states * n_actions
            )));
        }
        let dim = index.iter().max().map_or(0, |m| m + 1);
        Ok(FeatureMap {
            n_states,
            n_actions,
            dim,
            rows: index.into_iter().map(|j| vec![(j, 1.0)]).collect(),
            indicator: true,
        })
    }

    pub fn from_matrix(n_states: usize, n_actions: usize, matrix: Vec<Vec<f64>>) -> Result<Self> {
        if matrix.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "feature matrix has {} rows, expected {}",
                matrix.len(),
                n_states * n_actions
            )));
        }
        let dim = matrix.first().map_or(0, Vec::len);
        if dim == 0 || matrix.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("feature matrix must be rectangular with d >= 1".into()));
        }
        if matrix.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("feature matrix has non-finite entries".into()));
        }
        let rows: Vec<Vec<(usize, f64)>> = matrix
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(j, x)| (j, *x)).collect())
            .collect();
        let indicator = rows.iter().all(|r| r.len() <= 1 && r.iter().all(|(_, x)| *x == 1.0));
        Ok(FeatureMap { n_states, n_actions, dim, rows, indicator })
    }

    pub fn load_matrix(path: impl AsRef<Path>, n_states: usize, n_actions: usize) -> Result<Self> {
        let matrix: Vec<Vec<f64>> = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_matrix(n_states, n_actions, matrix)
    }

    pub fn from_spec(spec: &FeatureSpec, n_states: usize, n_actions: usize) -> Result<Self> {
        match spec {
            FeatureSpec::OneHot => Ok(Self::one_hot(n_states, n_actions)),
            FeatureSpec::Constant => Ok(Self::constant(n_states, n_actions)),
            FeatureSpec::IndicatorTable { index } => {
                if index.len() != n_states || index.iter().any(|r| r.len() != n_actions) {
                    return Err(Error::Dimension("indicator table must be [n_states][n_actions]".into()));
                }
                Self::indicator(n_states, n_actions, index.iter().flatten().copied().collect())
            }
            FeatureSpec::Custom { matrix } => Self::from_matrix(n_states, n_actions, matrix.clone()),
            FeatureSpec::MatrixFile { path } => Self::load_matrix(path, n_states, n_actions),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.rows.len()
    }

    /// Non-zero entries of `phi` for pair index `cell = s * |A| + a`.
    #[inline]
    pub fn row(&self, cell: usize) -> &[(usize, f64)] {
        &self.rows[cell]
    }

    /// Every row is zero or a single unit entry, so the pairs sharing a
    /// coordinate share a value and nothing else couples coordinates.
    pub fn is_indicator(&self) -> bool {
        self.indicator
    }

    #[inline]
    pub fn predict(&self, cell: usize, weights: &[f64]) -> f64 {
        self.rows[cell].iter().map(|(j, x)| x * weights[*j]).sum()
    }

    /// Smallest non-zero `|phi_ij|`.
    pub(crate) fn min_abs_entry(&self) -> f64 {
        self.rows.iter().flatten().map(|(_, x)| x.abs()).fold(f64::INFINITY, f64::min)
    }
}

fn evaluate_clipped(features: &FeatureMap, weights: &[f64], hi: f64) -> SaTable {
    let values = (0..features.n_pairs()).map(|c| features.predict(c, weights).clamp(0.0, hi)).collect();
    SaTable::from_vec(features.n_states, features.n_actions, values).expect("feature map shape")
}

fn check_weights(features: &FeatureMap, weights: &[f64]) -> Result<()> {
    if weights.len() != features.dim() {
        return Err(Error::Dimension(format!("{} weights for a {}-dimensional map", weights.len(), features.dim())));
    }
    Ok(())
}

/// Members of `F`: `f(s,a) = clip(phi(s,a) . w, 0, 1/(1-gamma))`.
#[derive(Debug, Clone)]
pub struct LinearQClass {
    pub features: Arc<FeatureMap>,
    pub weights: Vec<f64>,
    pub gamma: f64,
}

impl LinearQClass {
    pub fn zeros(features: Arc<FeatureMap>, gamma: f64) -> Self {
        let d = features.dim();
        LinearQClass { features, weights: vec![0.0; d], gamma }
    }

    pub fn with_weights(features: Arc<FeatureMap>, weights: Vec<f64>, gamma: f64) -> Result<Self> {
        check_weights(&features, &weights)?;
        Ok(LinearQClass { features, weights, gamma })
    }

    pub fn clip_hi(&self) -> f64 {
        value_bound(self.gamma)
    }

    pub fn eval(&self, s: usize, a: usize) -> f64 {
        self.features.predict(s * self.features.n_actions() + a, &self.weights).clamp(0.0, self.clip_hi())
    }

    pub fn table(&self) -> SaTable {
        evaluate_clipped(&self.features, &self.weights, self.clip_hi())
    }
}

/// Members of `G`: `g(s,a) = clip(phi(s,a) . w, 0, 2/(rho(1-gamma)))`.
#[derive(Debug, Clone)]
pub struct LinearDualClass {
    pub features: Arc<FeatureMap>,
    pub weights: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
}

impl LinearDualClass {
    pub fn zeros(features: Arc<FeatureMap>, rho: f64, gamma: f64) -> Self {
        let d = features.dim();
        LinearDualClass { features, weights: vec![0.0; d], rho, gamma }
    }

    pub fn with_weights(features: Arc<FeatureMap>, weights: Vec<f64>, rho: f64, gamma: f64) -> Result<Self> {
        check_weights(&features, &weights)?;
        Ok(LinearDualClass { features, weights, rho, gamma })
    }

    pub fn clip_hi(&self) -> f64 {
        dual_eta_upper(self.rho, self.gamma)
    }

    pub fn eval(&self, s: usize, a: usize) -> f64 {
        self.features.predict(s * self.features.n_actions() + a, &self.weights).clamp(0.0, self.clip_hi())
    }

    pub fn table(&self) -> SaTable {
        evaluate_clipped(&self.features, &self.weights, self.clip_hi())
    }
}
