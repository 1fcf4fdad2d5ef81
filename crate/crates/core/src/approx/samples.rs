use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rmdp::SaTable;

/// Aggregated weight and reward moments of one `(s, a, s')` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub s_next: usize,
    pub w: f64,
    /// `sum w r`
    pub wr: f64,
    /// `sum w r^2`
    pub wr2: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellSamples {
    pub weight: f64,
    /// Sorted by `s_next`.
    pub successors: Vec<Successor>,
}

/// A dataset compiled per state-action pair.
///
/// Transitions are put in a canonical order before summation, so two datasets
/// holding the same multiset of transitions compile to bit-identical tables.
/// Every loss in this crate depends on a sample only through its pair, its
/// successor and its reward, so these moments are sufficient.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    n_states: usize,
    n_actions: usize,
    total_weight: f64,
    cells: Vec<CellSamples>,
}

impl SampleTable {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        dataset.validate()?;
        let mut ts = dataset.transitions.clone();
        ts.sort_by(|x, y| {
            (x.s, x.a, x.s_next).cmp(&(y.s, y.a, y.s_next)).then(x.r.total_cmp(&y.r)).then(x.w.total_cmp(&y.w))
        });
        let na = dataset.n_actions;
        let mut cells = vec![CellSamples::default(); dataset.n_states * na];
        for t in &ts {
            let cell = &mut cells[t.s * na + t.a];
            match cell.successors.last_mut() {
                Some(last) if last.s_next == t.s_next => {
                    last.w += t.w;
                    last.wr += t.w * t.r;
                    last.wr2 += t.w * t.r * t.r;
                }
                _ => cell.successors.push(Successor { s_next: t.s_next, w: t.w, wr: t.w * t.r, wr2: t.w * t.r * t.r }),
            }
        }
        for cell in &mut cells {
            cell.weight = cell.successors.iter().map(|x| x.w).sum();
        }
        let total_weight = cells.iter().map(|c| c.weight).sum();
        Ok(SampleTable { n_states: dataset.n_states, n_actions: na, total_weight, cells })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn cells(&self) -> &[CellSamples] {
        &self.cells
    }

    pub fn cell(&self, c: usize) -> &CellSamples {
        &self.cells[c]
    }

    /// Unnormalized dual loss of pair `c` at `eta`:
    /// `sum_i w_i [(eta - v(s'_i))_+ - (1 - rho) eta]`.
    #[inline]
    pub fn cell_dual_loss(&self, c: usize, eta: f64, next_v: &[f64], rho: f64) -> f64 {
        let cell = &self.cells[c];
        let hinge: f64 = cell.successors.iter().map(|x| x.w * (eta - next_v[x.s_next]).max(0.0)).sum();
        hinge - (1.0 - rho) * eta * cell.weight
    }

    /// Weighted empirical dual loss of the table `g` given next-state values.
    pub fn dual_loss(&self, g: &SaTable, next_v: &[f64], rho: f64) -> f64 {
        let total: f64 = (0..self.cells.len()).map(|c| self.cell_dual_loss(c, g.values()[c], next_v, rho)).sum();
        total / self.total_weight
    }

    /// Empirical mass per pair, normalized to sum to one.
    pub fn empirical_mu(&self) -> SaTable {
        let values = self.cells.iter().map(|c| c.weight / self.total_weight).collect();
        SaTable::from_vec(self.n_states, self.n_actions, values).expect("shape")
    }
}
