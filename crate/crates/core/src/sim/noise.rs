//! Exogenous noise: one uniform per structural node per individual.
//!
//! Counterfactual draws under different interventions share one
//! [`NoiseRecord`], which is what makes cross-world quantities (principal
//! strata, pointwise monotonicity) well defined inside the simulator. The
//! per-individual stream is derived from `(seed, individual)` with a
//! counter-based cipher, so simulation is embarrassingly parallel and
//! bit-identical regardless of how work is split across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::law::StructuralLaw;

/// Uniform draws for every structural node of one individual, in fixed draw
/// order: arm, baseline, then per interval (censoring, event, covariates),
/// then the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord {
    pub arm: f64,
    pub baseline: Vec<f64>,
    /// One per interval `k = 0..K` (used as the terminal draw when the law
    /// censors terminally).
    pub censor: Vec<f64>,
    pub event: Vec<f64>,
    /// `covariate[k][c]` for `k = 0..K-1`.
    pub covariate: Vec<Vec<f64>>,
    pub outcome: f64,
}

impl NoiseRecord {
    pub fn draw(rng: &mut ChaCha8Rng, law: &StructuralLaw) -> Self {
        let kk = law.grid.k;
        let arm = open_uniform(rng);
        let baseline = (0..law.n_baseline()).map(|_| open_uniform(rng)).collect();
        let mut censor = Vec::with_capacity(kk + 1);
        let mut event = Vec::with_capacity(kk + 1);
        let mut covariate = Vec::with_capacity(kk);
        for k in 0..=kk {
            censor.push(open_uniform(rng));
            event.push(open_uniform(rng));
            if k < kk {
                covariate.push((0..law.n_tv()).map(|_| open_uniform(rng)).collect());
            }
        }
        let outcome = open_uniform(rng);
        NoiseRecord {
            arm,
            baseline,
            censor,
            event,
            covariate,
            outcome,
        }
    }

    pub fn matches(&self, law: &StructuralLaw) -> bool {
        let kk = law.grid.k;
        self.baseline.len() == law.n_baseline()
            && self.censor.len() == kk + 1
            && self.event.len() == kk + 1
            && self.covariate.len() == kk
            && self.covariate.iter().all(|v| v.len() == law.n_tv())
    }
}

/// Deterministic per-individual stream for `(seed, i)`.
pub fn individual_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

/// Uniform on the open interval (0, 1), safe for inverse-CDF transforms.
pub fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}
