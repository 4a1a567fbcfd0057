//! Sequential generation of factual trials and deterministic counterfactual
//! evaluation under interventions on the treatment components.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    ArmAssignment, CovariatePartition, LongitudinalRecord, OrderingVariant, TrialDataset,
};
use crate::error::SimError;
use crate::util::normal_quantile;

use super::law::{Channel, StructuralLaw, ViolationKind};
use super::noise::{individual_rng, NoiseRecord};

/// Trial design to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Random assignment of the original treatment `A`.
    TwoArm,
    /// Joint random assignment of `(A_Y, A_D)`, 1:1:1:1.
    FourArm,
    /// 1:1:1:1:1:1 over the two original arms and the four joint arms.
    SixArm,
}

/// Realized values of one individual's counterfactual world under an
/// intervention `(a_Y, a_D)` with censoring eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualDraw {
    pub a_y: u8,
    pub a_d: u8,
    /// `D_1..D_{K+1}`.
    pub events: Vec<u8>,
    /// `L_1..L_K`; `None` after the event.
    pub covariates: Vec<Option<Vec<f64>>>,
    /// Defined only when `D_{K+1} = 0`.
    pub outcome: Option<f64>,
}

impl CounterfactualDraw {
    pub fn survived(&self) -> bool {
        *self.events.last().expect("nonempty") == 0
    }
}

/// Draws a complete trial dataset from the law.
///
/// Generation is sequential per the grid's temporal order; individuals are
/// independent, each driven by its own `(seed, i)` noise stream, so the
/// output is byte-identical for a given seed regardless of thread count.
/// When `violation` is set, the corresponding forbidden dependence is
/// injected into the law before generation.
pub fn simulate(
    law: &StructuralLaw,
    n: usize,
    seed: u64,
    design: Design,
    violation: Option<ViolationKind>,
) -> Result<TrialDataset, SimError> {
    law.validate()?;
    if n == 0 {
        return Err(SimError::InvalidLaw("n must be at least 1".into()));
    }
    let law = match violation {
        Some(v) => law.with_violation(v),
        None => law.clone(),
    };
    let records: Vec<LongitudinalRecord> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = individual_rng(seed, i as u64);
            let noise = NoiseRecord::draw(&mut rng, &law);
            generate_record(&law, &noise, design, i)
        })
        .collect();
    let tv = law.tv_names();
    Ok(TrialDataset {
        grid: law.grid,
        records,
        baseline_names: law.baseline_names(),
        tv_names: tv.clone(),
        partition: partition_from_law(&law),
    })
}

/// The partition implied by the law's channel assignment.
pub fn partition_from_law(law: &StructuralLaw) -> CovariatePartition {
    CovariatePartition {
        ay_block: law
            .covariates
            .iter()
            .filter(|c| c.channel == Channel::Ay)
            .map(|c| c.name.clone())
            .collect(),
        ad_block: law
            .covariates
            .iter()
            .filter(|c| c.channel == Channel::Ad)
            .map(|c| c.name.clone())
            .collect(),
    }
}

fn draw_baseline(law: &StructuralLaw, noise: &NoiseRecord) -> Vec<f64> {
    law.baseline
        .iter()
        .zip(&noise.baseline)
        .map(|(spec, &u)| match spec.dist {
            super::law::BaselineDist::Bernoulli { p } => (u < p) as u8 as f64,
            super::law::BaselineDist::Gaussian { mean, sd } => mean + sd * normal_quantile(u),
        })
        .collect()
}

fn assign_arm(law: &StructuralLaw, design: Design, u: f64, l0: &[f64]) -> ArmAssignment {
    match design {
        Design::TwoArm => {
            let p = law.assign_prob(l0);
            ArmAssignment::TwoArm { a: (u < p) as u8 }
        }
        Design::FourArm => {
            let cell = ((u * 4.0) as usize).min(3);
            ArmAssignment::FourArm {
                a_y: (cell & 1) as u8,
                a_d: (cell >> 1) as u8,
            }
        }
        Design::SixArm => {
            let cell = ((u * 6.0) as usize).min(5);
            match cell {
                0 => ArmAssignment::TwoArm { a: 0 },
                1 => ArmAssignment::TwoArm { a: 1 },
                c => {
                    let c = c - 2;
                    ArmAssignment::FourArm {
                        a_y: (c & 1) as u8,
                        a_d: (c >> 1) as u8,
                    }
                }
            }
        }
    }
}

fn generate_record(
    law: &StructuralLaw,
    noise: &NoiseRecord,
    design: Design,
    i: usize,
) -> LongitudinalRecord {
    let l0 = draw_baseline(law, noise);
    let arm = assign_arm(law, design, noise.arm, &l0);
    let (a_y, a_d) = (arm.a_y(), arm.a_d());
    // The modified-treatment break perturbs the four-arm implementation of
    // the treatment components relative to the original two-arm treatment.
    let mt = law.modified_treatment_break && matches!(arm, ArmAssignment::FourArm { .. });

    let kk = law.grid.k;
    let mut events = vec![0u8; kk + 1];
    let mut censoring = vec![0u8; kk + 1];
    let mut covariates: Vec<Option<Vec<f64>>> = vec![None; kk];
    let mut prev: Vec<f64> = Vec::new();
    let mut dead = false;
    let mut censored = false;

    for k in 0..=kk {
        if law.grid.ordering == OrderingVariant::StandardCdl && !dead && !censored {
            let pc = law.interim_censor_hazard(k, a_y, a_d, &l0, &prev);
            if noise.censor[k] < pc {
                censored = true;
            }
        }
        censoring[k] = censored as u8;
        if !dead && !censored {
            let pd = law.hazard(k, a_y, a_d, &l0, &prev, mt);
            if noise.event[k] < pd {
                dead = true;
            }
        }
        events[k] = dead as u8;
        if k < kk {
            if !dead && !censored {
                let l = draw_covariates(law, k, a_y, a_d, &l0, &prev, noise);
                prev = l.clone();
                covariates[k] = Some(l);
            }
        }
    }

    if law.grid.ordering == OrderingVariant::TerminalDBeforeC && !dead {
        let pc = law.terminal_censor_prob(a_y, a_d, &l0, &prev);
        if noise.censor[kk] < pc {
            censored = true;
            censoring[kk] = 1;
        }
    }

    let outcome = if !dead && !censored {
        let mu = law.outcome_mean(a_y, a_d, &l0, &prev, mt);
        Some(mu + law.outcome.sigma * normal_quantile(noise.outcome))
    } else {
        None
    };

    LongitudinalRecord {
        id: i.to_string(),
        baseline: l0,
        arm,
        events,
        covariates,
        censoring,
        outcome,
    }
}

/// Draws `L_{k+1}`: event-pathway components first, then outcome-pathway
/// components conditional on them.
fn draw_covariates(
    law: &StructuralLaw,
    k: usize,
    a_y: u8,
    a_d: u8,
    l0: &[f64],
    prev: &[f64],
    noise: &NoiseRecord,
) -> Vec<f64> {
    let ntv = law.n_tv();
    let mut l = vec![0.0; ntv];
    let ad_idx = law.ad_components();
    let mut same_ad = Vec::with_capacity(ad_idx.len());
    for &c in &ad_idx {
        let p = law.density(k, c, a_y, a_d, l0, prev, &[]);
        let v = (noise.covariate[k][c] < p) as u8 as f64;
        l[c] = v;
        same_ad.push(v);
    }
    for c in law.ay_components() {
        let p = law.density(k, c, a_y, a_d, l0, prev, &same_ad);
        l[c] = (noise.covariate[k][c] < p) as u8 as f64;
    }
    l
}

/// Deterministic evaluation of the structural equations under the
/// intervention `(a_Y, a_D)` with censoring eliminated. The same noise and
/// intervention always yield the same realization, and jointly setting both
/// components to `a` reproduces the two-arm world at `A = a` exactly.
pub fn draw_counterfactual(
    law: &StructuralLaw,
    noise: &NoiseRecord,
    a_y: u8,
    a_d: u8,
) -> Result<CounterfactualDraw, SimError> {
    if !noise.matches(law) {
        return Err(SimError::NoiseShapeMismatch(
            "noise dimensions differ from law".into(),
        ));
    }
    let l0 = draw_baseline(law, noise);
    let mt = law.modified_treatment_break;
    let kk = law.grid.k;
    let mut events = vec![0u8; kk + 1];
    let mut covariates: Vec<Option<Vec<f64>>> = vec![None; kk];
    let mut prev: Vec<f64> = Vec::new();
    let mut dead = false;
    for k in 0..=kk {
        if !dead {
            let pd = law.hazard(k, a_y, a_d, &l0, &prev, mt);
            if noise.event[k] < pd {
                dead = true;
            }
        }
        events[k] = dead as u8;
        if k < kk && !dead {
            let l = draw_covariates(law, k, a_y, a_d, &l0, &prev, noise);
            prev = l.clone();
            covariates[k] = Some(l);
        }
    }
    let outcome = if dead {
        None
    } else {
        let mu = law.outcome_mean(a_y, a_d, &l0, &prev, mt);
        Some(mu + law.outcome.sigma * normal_quantile(noise.outcome))
    };
    Ok(CounterfactualDraw {
        a_y,
        a_d,
        events,
        covariates,
        outcome,
    })
}
