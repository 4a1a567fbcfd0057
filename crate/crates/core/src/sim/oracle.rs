//! Monte-Carlo oracles for the target estimands, driven by shared exogenous
//! noise so that cross-world contrasts are well defined.

use rayon::prelude::*;

use crate::error::SimError;
use crate::util::{mean_and_se, KahanSum};

use super::engine::draw_counterfactual;
use super::law::{BaselineDist, StructuralLaw};
use super::noise::{individual_rng, NoiseRecord};

const MIN_SURVIVORS: usize = 50;

/// Monte-Carlo estimate of the conditional counterfactual mean
/// `E(Y^{a_Y, a_D} | D^{a_Y, a_D}_{K+1} = 0)` with censoring eliminated.
/// Returns the mean and its Monte-Carlo standard error.
pub fn oracle_conditional_mean(
    law: &StructuralLaw,
    a_y: u8,
    a_d: u8,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64), SimError> {
    law.validate()?;
    let outcomes: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = individual_rng(seed, i as u64);
            let noise = NoiseRecord::draw(&mut rng, law);
            let draw = draw_counterfactual(law, &noise, a_y, a_d).expect("noise matches law");
            draw.outcome
        })
        .collect();
    if outcomes.len() < MIN_SURVIVORS {
        return Err(SimError::DegenerateOracle {
            survivors: outcomes.len(),
            min: MIN_SURVIVORS,
        });
    }
    Ok(mean_and_se(&outcomes))
}

/// Monte-Carlo estimate of the principal-stratum (always-survivor) effect
/// `E(Y^{a=1} - Y^{a=0} | D^{a=1}_{K+1} = D^{a=0}_{K+1} = 0)`, using shared
/// noise across the two interventions.
pub fn oracle_sace(law: &StructuralLaw, n_mc: usize, seed: u64) -> Result<(f64, f64), SimError> {
    law.validate()?;
    let diffs: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = individual_rng(seed, i as u64);
            let noise = NoiseRecord::draw(&mut rng, law);
            let d1 = draw_counterfactual(law, &noise, 1, 1).expect("noise matches law");
            let d0 = draw_counterfactual(law, &noise, 0, 0).expect("noise matches law");
            match (d1.outcome, d0.outcome) {
                (Some(y1), Some(y0)) => Some(y1 - y0),
                _ => None,
            }
        })
        .collect();
    if diffs.len() < MIN_SURVIVORS {
        return Err(SimError::DegenerateOracle {
            survivors: diffs.len(),
            min: MIN_SURVIVORS,
        });
    }
    Ok(mean_and_se(&diffs))
}

/// One cell of the exact survivor distribution: baseline values, final
/// time-varying covariate values, and the joint mass
/// `Pr(L_0 = l0, L_K = lk, D_{K+1} = 0 | A = a)`.
#[derive(Debug, Clone)]
pub struct SurvivorCell {
    pub l0: Vec<f64>,
    pub last: Vec<f64>,
    pub mass: f64,
}

/// Exact joint distribution of `(L_0, L_K)` among two-arm survivors for
/// all-binary laws, by enumerating baseline cells and propagating the joint
/// distribution of (alive, current covariates) forward in time. Serves as an
/// analytic cross-check on the Monte-Carlo engine and for calibrating law
/// presets.
pub fn exact_survivor_distribution(
    law: &StructuralLaw,
    a: u8,
) -> Result<Vec<SurvivorCell>, SimError> {
    law.validate()?;
    if !law.all_baseline_binary() {
        return Err(SimError::InvalidLaw(
            "exact survivor distribution requires all-binary baseline covariates".into(),
        ));
    }
    let n0 = law.n_baseline();
    let ntv = law.n_tv();
    let kk = law.grid.k;
    let n_tv_states = 1usize << ntv;
    let ad_idx = law.ad_components();
    let ay_idx = law.ay_components();
    let tv_values = |s: usize| -> Vec<f64> { (0..ntv).map(|i| ((s >> i) & 1) as f64).collect() };
    let transition = |k: usize, l0: &[f64], prev: &[f64], s2: usize| -> f64 {
        let lvals = tv_values(s2);
        let same_ad: Vec<f64> = ad_idx.iter().map(|&c| lvals[c]).collect();
        let mut p_trans = 1.0;
        for &c in &ad_idx {
            let p = law.density(k, c, a, a, l0, prev, &[]);
            p_trans *= if lvals[c] > 0.5 { p } else { 1.0 - p };
        }
        for &c in &ay_idx {
            let p = law.density(k, c, a, a, l0, prev, &same_ad);
            p_trans *= if lvals[c] > 0.5 { p } else { 1.0 - p };
        }
        p_trans
    };

    let mut cells = Vec::new();
    for cell in 0..(1usize << n0) {
        let l0 = tv_values_n(cell, n0);
        let mut p_cell = 1.0;
        for (i, b) in law.baseline.iter().enumerate() {
            let p = match b.dist {
                BaselineDist::Bernoulli { p } => p,
                BaselineDist::Gaussian { .. } => unreachable!(),
            };
            p_cell *= if l0[i] > 0.5 { p } else { 1.0 - p };
        }
        let p_d1 = law.hazard(0, a, a, &l0, &[], false);
        if kk == 0 {
            cells.push(SurvivorCell {
                l0,
                last: Vec::new(),
                mass: p_cell * (1.0 - p_d1),
            });
            continue;
        }
        // alive[s] = Pr(L_0 = l0, alive through k, L_k = s) as k advances.
        let mut alive = vec![0.0f64; n_tv_states];
        for (s, slot) in alive.iter_mut().enumerate() {
            *slot = p_cell * (1.0 - p_d1) * transition(0, &l0, &[], s);
        }
        for k in 1..=kk {
            let mut next = vec![0.0f64; n_tv_states];
            for (s, &mass) in alive.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let prev = tv_values(s);
                let p_die = law.hazard(k, a, a, &l0, &prev, false);
                let surv_mass = mass * (1.0 - p_die);
                if k == kk {
                    next[s] += surv_mass;
                } else {
                    for (s2, slot) in next.iter_mut().enumerate() {
                        *slot += surv_mass * transition(k, &l0, &prev, s2);
                    }
                }
            }
            alive = next;
        }
        for (s, &mass) in alive.iter().enumerate() {
            cells.push(SurvivorCell {
                l0: l0.clone(),
                last: tv_values(s),
                mass,
            });
        }
    }
    Ok(cells)
}

fn tv_values_n(cell: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((cell >> i) & 1) as f64).collect()
}

/// Closed-form two-arm survival `Pr(D_{K+1} = 0 | A = a)` for all-binary laws.
pub fn exact_two_arm_survival(law: &StructuralLaw, a: u8) -> Result<f64, SimError> {
    let cells = exact_survivor_distribution(law, a)?;
    let mut total = KahanSum::new();
    for c in &cells {
        total.add(c.mass);
    }
    Ok(total.value())
}
