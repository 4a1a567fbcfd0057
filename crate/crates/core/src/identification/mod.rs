//! Exact plug-in evaluation of the identification functionals on fully
//! discrete laws: the iterated-conditional g-formula and its algebraically
//! equivalent weighted representation, with a general split of the
//! time-varying covariates into an outcome-pathway block and an
//! event-pathway block.

mod build;
mod evaluate;

pub use build::{empirical_law, law_from_structural, random_valid_law};
pub use evaluate::{gformula_exact, weighted_repr_exact};

use serde::{Deserialize, Serialize};

use crate::data::{CovariatePartition, TimeGrid};
use crate::error::IdentError;

/// Probability threshold below which a referenced cell counts as a
/// positivity violation: exact zeros would silently produce 0/0 in the
/// identification sums.
pub const POSITIVITY_MIN: f64 = 1e-12;

/// Hard cap on the enumerated support.
pub const MAX_CELLS: u64 = 1_000_000;

/// Conditional law of one time-varying covariate component at one time.
///
/// Event-pathway components are indexed by `(history, arm)`; outcome-pathway
/// components additionally condition on the same-time event-pathway state,
/// which is drawn first within the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    /// Flattened pmf rows; see [`DiscreteLaw::density_prob`] for the layout.
    pub probs: Vec<f64>,
}

/// A fully discrete law over the trial data structure: finite supports for
/// every covariate component and conditional probability tables for
/// treatment assignment, censoring, the event process, the covariate blocks,
/// and the conditional outcome mean among uncensored survivors.
///
/// Undefined cells (possible in empirically estimated laws) are stored as
/// NaN and surface as positivity violations when referenced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaw {
    pub grid: TimeGrid,
    pub baseline_names: Vec<String>,
    pub tv_names: Vec<String>,
    pub partition: CovariatePartition,
    /// Finite support per baseline component.
    pub baseline_support: Vec<Vec<f64>>,
    /// Finite support per time-varying component (shared across times).
    pub tv_support: Vec<Vec<f64>>,
    /// `Pr(L_0 = cell)`, lexicographic over baseline supports.
    pub l0_pmf: Vec<f64>,
    /// `Pr(A = 1 | L_0 = cell)`.
    pub treat: Vec<f64>,
    /// `event[k][hist * 2 + a] = Pr(D_{k+1} = 1 | at risk, history, A = a)`.
    pub event: Vec<Vec<f64>>,
    /// Interim censoring hazards (standard ordering), same layout as `event`.
    pub interim_censor: Option<Vec<Vec<f64>>>,
    /// Terminal censoring probability among survivors (terminal ordering):
    /// `[hist_K * 2 + a]`.
    pub terminal_censor: Option<Vec<f64>>,
    /// `density[k][c]` is the law of component `c` of `L_{k+1}`.
    pub density: Vec<Vec<DensityTable>>,
    /// `E(Y | D_{K+1} = 0, C_{K+1} = 0, history, A = a)` as `[hist_K * 2 + a]`.
    pub outcome: Vec<f64>,
}

impl DiscreteLaw {
    pub fn n_l0_states(&self) -> usize {
        self.baseline_support.iter().map(Vec::len).product::<usize>().max(1)
    }

    pub fn n_tv_states(&self) -> usize {
        self.tv_support.iter().map(Vec::len).product::<usize>().max(1)
    }

    /// Indices of event-pathway components.
    pub fn ad_components(&self) -> Vec<usize> {
        self.tv_names
            .iter()
            .enumerate()
            .filter(|(_, n)| self.partition.is_ad(n))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn ay_components(&self) -> Vec<usize> {
        self.tv_names
            .iter()
            .enumerate()
            .filter(|(_, n)| !self.partition.is_ad(n))
            .map(|(i, _)| i)
            .collect()
    }

    /// Joint states of the event-pathway block at one time.
    pub fn n_ad_states(&self) -> usize {
        self.ad_components()
            .iter()
            .map(|&c| self.tv_support[c].len())
            .product::<usize>()
            .max(1)
    }

    /// Number of full histories `(l_0, l_1, ..., l_K)`.
    pub fn n_full_histories(&self) -> u64 {
        let mut n = self.n_l0_states() as u64;
        for _ in 0..self.grid.k {
            n = n.saturating_mul(self.n_tv_states() as u64);
        }
        n
    }

    pub fn check_size(&self) -> Result<(), IdentError> {
        let cells = self.n_full_histories();
        if cells > MAX_CELLS {
            return Err(IdentError::TooLarge {
                cells,
                limit: MAX_CELLS,
            });
        }
        Ok(())
    }

    /// Decodes a time-varying state index into component values.
    pub fn tv_values(&self, mut state: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.tv_support.len());
        for support in &self.tv_support {
            let m = support.len();
            out.push(support[state % m]);
            state /= m;
        }
        out
    }

    /// Encodes component values into a state index; `None` if any value is
    /// outside the support.
    pub fn tv_state_of(&self, values: &[f64]) -> Option<usize> {
        let mut state = 0usize;
        let mut stride = 1usize;
        for (support, &v) in self.tv_support.iter().zip(values) {
            let idx = support.iter().position(|&s| s == v)?;
            state += stride * idx;
            stride *= support.len();
        }
        Some(state)
    }

    pub fn l0_values(&self, mut cell: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.baseline_support.len());
        for support in &self.baseline_support {
            let m = support.len();
            out.push(support[cell % m]);
            cell /= m;
        }
        out
    }

    pub fn l0_cell_of(&self, values: &[f64]) -> Option<usize> {
        let mut cell = 0usize;
        let mut stride = 1usize;
        for (support, &v) in self.baseline_support.iter().zip(values) {
            let idx = support.iter().position(|&s| s == v)?;
            cell += stride * idx;
            stride *= support.len();
        }
        Some(cell)
    }

    /// The event-pathway block state implied by a full time-varying state.
    pub fn ad_state_of_tv(&self, tv_state: usize) -> usize {
        let values = self.tv_values(tv_state);
        self.ad_state_of_values(&values)
            .expect("component value in support")
    }

    /// Encodes the event-pathway block state from full component values.
    pub fn ad_state_of_values(&self, values: &[f64]) -> Option<usize> {
        let mut state = 0usize;
        let mut stride = 1usize;
        for &c in &self.ad_components() {
            let support = &self.tv_support[c];
            let idx = support.iter().position(|&s| s == values[c])?;
            state += stride * idx;
            stride *= support.len();
        }
        Some(state)
    }

    /// History index for `(l0, l_1..l_t)`: `l0` first, then times in order.
    pub fn extend_history(&self, hist: usize, tv_state: usize) -> usize {
        hist * self.n_tv_states() + tv_state
    }

    /// `Pr(D_{k+1} = 1 | history, A = a)`.
    pub fn event_prob(&self, k: usize, hist: usize, a: u8) -> f64 {
        self.event[k][hist * 2 + a as usize]
    }

    pub fn interim_censor_prob(&self, k: usize, hist: usize, a: u8) -> f64 {
        match &self.interim_censor {
            Some(t) => t[k][hist * 2 + a as usize],
            None => 0.0,
        }
    }

    pub fn terminal_censor_prob(&self, hist: usize, a: u8) -> f64 {
        match &self.terminal_censor {
            Some(t) => t[hist * 2 + a as usize],
            None => 0.0,
        }
    }

    pub fn outcome_mean(&self, hist: usize, a: u8) -> f64 {
        self.outcome[hist * 2 + a as usize]
    }

    /// Probability of component `c` of `L_{k+1}` taking support index
    /// `value_idx`, given the history, the same-time event-pathway state
    /// (ignored for event-pathway components), and the arm.
    pub fn density_prob(
        &self,
        k: usize,
        c: usize,
        hist: usize,
        ad_state: usize,
        a: u8,
        value_idx: usize,
    ) -> f64 {
        let support_len = self.tv_support[c].len();
        let table = &self.density[k][c];
        let row = if self.partition.is_ad(&self.tv_names[c]) {
            hist * 2 + a as usize
        } else {
            (hist * self.n_ad_states() + ad_state) * 2 + a as usize
        };
        table.probs[row * support_len + value_idx]
    }

    /// Joint pmf of the event-pathway block at `k+1`.
    pub fn ad_block_prob(&self, k: usize, hist: usize, tv_state: usize, a: u8) -> f64 {
        let values = self.tv_values(tv_state);
        let mut p = 1.0;
        for &c in &self.ad_components() {
            let vi = self.tv_support[c]
                .iter()
                .position(|&s| s == values[c])
                .expect("in support");
            p *= self.density_prob(k, c, hist, 0, a, vi);
        }
        p
    }

    /// Joint pmf of the outcome-pathway block at `k+1`, conditional on the
    /// same-time event-pathway state.
    pub fn ay_block_prob(&self, k: usize, hist: usize, tv_state: usize, a: u8) -> f64 {
        let values = self.tv_values(tv_state);
        let ad_state = self.ad_state_of_tv(tv_state);
        let mut p = 1.0;
        for &c in &self.ay_components() {
            let vi = self.tv_support[c]
                .iter()
                .position(|&s| s == values[c])
                .expect("in support");
            p *= self.density_prob(k, c, hist, ad_state, a, vi);
        }
        p
    }

    /// Marginal `Pr(A = a)`.
    pub fn treat_marginal(&self, a: u8) -> f64 {
        let mut p = 0.0;
        for cell in 0..self.n_l0_states() {
            let p1 = self.treat[cell];
            p += self.l0_pmf[cell] * if a == 1 { p1 } else { 1.0 - p1 };
        }
        p
    }

    /// Row-sum and range checks on every table.
    pub fn validate(&self) -> Result<(), IdentError> {
        self.check_size()?;
        let sum: f64 = self.l0_pmf.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(IdentError::Unsupported(format!(
                "baseline pmf sums to {sum}, not 1"
            )));
        }
        let n_tv = self.n_tv_states();
        for k in 0..self.density.len() {
            for (c, table) in self.density[k].iter().enumerate() {
                let m = self.tv_support[c].len();
                let rows = table.probs.len() / m;
                for r in 0..rows {
                    let s: f64 = table.probs[r * m..(r + 1) * m].iter().sum();
                    if s.is_finite() && (s - 1.0).abs() > 1e-12 {
                        return Err(IdentError::Unsupported(format!(
                            "density table k={k} c={c} row {r} sums to {s}"
                        )));
                    }
                }
            }
        }
        let _ = n_tv;
        Ok(())
    }
}

/// Human-readable cell description for positivity errors.
pub(crate) fn describe_cell(channel: &str, k: usize, hist: usize, a: u8) -> String {
    format!("{channel}[k={k}, hist={hist}, A={a}]")
}
