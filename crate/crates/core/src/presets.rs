//! Ready-made structural laws and matching nuisance model suites, used by
//! tests, the acceptance checks, and the CLI pipeline replication.

use crate::data::{OrderingVariant, TimeGrid, TrialDataset};
use crate::nuisance::{Link, ModelSpec, NuisanceSpecSuite, ResponseChannel, Term};
use crate::sim::{
    BaselineDist, BaselineSpec, CensorCoefs, CensoringSpec, Channel, DensityCoefs, HazardCoefs,
    OutcomeCoefs, StructuralLaw, TvCovariateSpec,
};

fn bernoulli(name: &str, p: f64) -> BaselineSpec {
    BaselineSpec {
        name: name.to_string(),
        dist: BaselineDist::Bernoulli { p },
    }
}

/// Small two-period law used by desk-scale tests: one binary baseline
/// covariate, one binary event-pathway covariate, moderate effects on every
/// channel, no censoring.
pub fn desk_law_k1() -> StructuralLaw {
    StructuralLaw {
        grid: TimeGrid::new(1, OrderingVariant::StandardCdl),
        baseline: vec![bernoulli("x", 0.5)],
        covariates: vec![TvCovariateSpec {
            name: "prog".to_string(),
            channel: Channel::Ad,
        }],
        hazard_d: vec![
            HazardCoefs {
                intercept: -1.4,
                a_d: -0.5,
                a_y: 0.0,
                l0: vec![0.8],
                prev: vec![],
            },
            HazardCoefs {
                intercept: -1.6,
                a_d: -0.5,
                a_y: 0.0,
                l0: vec![0.8],
                prev: vec![1.0],
            },
        ],
        density_l: vec![vec![DensityCoefs {
            intercept: -0.7,
            arm: -0.8,
            wrong_arm: 0.0,
            l0: vec![0.9],
            prev: vec![],
            same_time_ad: vec![],
        }]],
        censoring: CensoringSpec::None,
        outcome: OutcomeCoefs {
            intercept: 1.0,
            a_y: 2.0,
            a_d_direct: 0.0,
            l0: vec![1.5],
            last: vec![2.5],
            sigma: 2.0,
        },
        monotone: false,
        assignment: None,
        modified_treatment_break: false,
    }
}

/// Desk law with every treatment coefficient set to zero.
pub fn null_law_k1() -> StructuralLaw {
    let mut law = desk_law_k1();
    for h in &mut law.hazard_d {
        h.a_d = 0.0;
    }
    for per_k in &mut law.density_l {
        for d in per_k.iter_mut() {
            d.arm = 0.0;
        }
    }
    law.outcome.a_y = 0.0;
    law
}

/// Law whose event hazards are free of time-varying covariates with a
/// protective event-pathway component, so the counterfactual event
/// indicators are ordered pointwise in the noise.
pub fn monotone_law_k1() -> StructuralLaw {
    let mut law = desk_law_k1();
    law.hazard_d = vec![
        HazardCoefs {
            intercept: -1.2,
            a_d: -0.7,
            a_y: 0.0,
            l0: vec![0.6],
            prev: vec![],
        },
        HazardCoefs {
            intercept: -1.4,
            a_d: -0.7,
            a_y: 0.0,
            l0: vec![0.6],
            prev: vec![0.0],
        },
    ];
    law.monotone = true;
    law
}

/// Monotone law with no treatment effect on the event process at all, so the
/// counterfactual event indicators coincide across arms.
pub fn no_event_effect_law_k1() -> StructuralLaw {
    let mut law = monotone_law_k1();
    for h in &mut law.hazard_d {
        h.a_d = 0.0;
    }
    law
}

/// Desk law with a terminal censoring mechanism that depends strongly on the
/// time-varying covariate, which also drives the outcome. Exercises the
/// censoring adjustments.
pub fn censored_law_k1() -> StructuralLaw {
    let mut law = desk_law_k1();
    law.grid = TimeGrid::new(1, OrderingVariant::TerminalDBeforeC);
    law.censoring = CensoringSpec::Terminal {
        coefs: CensorCoefs {
            intercept: -1.6,
            a_y: 0.5,
            a_d: 0.0,
            l0: vec![0.3],
            prev: vec![1.8],
        },
    };
    law
}

/// Twelve-interval law shaped like the prostate-cancer trial analysis: five
/// binary baseline covariates, one binary progression indicator on the
/// event pathway, terminal censoring of the outcome among survivors, and
/// survival calibrated to 0.79 / 0.72 by arm.
pub fn swog_like_law() -> StructuralLaw {
    let kk = 11;
    let l0_hazard = vec![0.25, 0.15, 0.30, 0.20, 0.25];
    let l0_density = vec![0.20, 0.10, 0.40, 0.20, 0.30];
    let hazard_d = (0..=kk)
        .map(|k| HazardCoefs {
            intercept: SWOG_HAZARD_INTERCEPT + 0.02 * k as f64,
            a_d: SWOG_HAZARD_AD,
            a_y: 0.0,
            l0: l0_hazard.clone(),
            prev: if k == 0 { vec![] } else { vec![0.9] },
        })
        .collect();
    let density_l = (0..kk)
        .map(|k| {
            vec![DensityCoefs {
                intercept: -2.4 + 0.03 * k as f64,
                arm: -0.5,
                wrong_arm: 0.0,
                l0: l0_density.clone(),
                prev: if k == 0 { vec![] } else { vec![3.0] },
                same_time_ad: vec![],
            }]
        })
        .collect();
    StructuralLaw {
        grid: TimeGrid::new(kk, OrderingVariant::TerminalDBeforeC),
        baseline: vec![
            bernoulli("age", 0.45),
            bernoulli("race", 0.20),
            bernoulli("prognosis", 0.35),
            bernoulli("bone_pain", 0.50),
            bernoulli("perf", 0.40),
        ],
        covariates: vec![TvCovariateSpec {
            name: "prog".to_string(),
            channel: Channel::Ad,
        }],
        hazard_d,
        density_l,
        censoring: CensoringSpec::Terminal {
            coefs: CensorCoefs {
                intercept: SWOG_CENSOR_INTERCEPT,
                a_y: -0.3,
                a_d: 0.0,
                l0: vec![0.10, 0.0, 0.20, 0.10, 0.10],
                prev: vec![0.6],
            },
        },
        outcome: OutcomeCoefs {
            intercept: SWOG_OUTCOME_INTERCEPT,
            a_y: SWOG_OUTCOME_AY,
            a_d_direct: 0.0,
            l0: vec![-1.5, -0.5, -2.0, -1.8, -1.2],
            last: vec![-6.0],
            sigma: 13.0,
        },
        monotone: false,
        assignment: None,
        modified_treatment_break: false,
    }
}

// Calibrated so that the exact two-arm survival probabilities are 0.79 and
// 0.72, the censoring rate among survivors matches the trial's 152-of-368
// observed outcomes, and the survivor outcome means sit near the reported
// -4.4 / -9.1.
pub(crate) const SWOG_HAZARD_INTERCEPT: f64 = -4.536518;
pub(crate) const SWOG_HAZARD_AD: f64 = -0.212221;
pub(crate) const SWOG_CENSOR_INTERCEPT: f64 = 0.137968;
pub(crate) const SWOG_OUTCOME_INTERCEPT: f64 = -4.763816;
pub(crate) const SWOG_OUTCOME_AY: f64 = 4.043270;

/// Terms for every baseline covariate of a dataset.
fn baseline_terms(ds: &TrialDataset) -> Vec<Term> {
    ds.baseline_names
        .iter()
        .map(|n| Term::Baseline(n.clone()))
        .collect()
}

/// Terms for every time-varying covariate (most recent value).
fn lag_terms(ds: &TrialDataset) -> Vec<Term> {
    ds.tv_names.iter().map(|n| Term::Lagged(n.clone())).collect()
}

/// Options controlling which parts of a model suite are deliberately
/// misspecified, for the double-robustness checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct SuiteMisspec {
    /// Omit the time-varying covariates from the outcome model.
    pub outcome_drops_lag: bool,
    /// Omit the baseline covariates from the event hazard and covariate
    /// density models.
    pub treatment_models_drop_baseline: bool,
}

/// A pooled-over-time nuisance suite matching the dataset's schema: an
/// arm-stratified event hazard, one density model per time-varying
/// covariate, a censoring model when the data are censored, and a pooled
/// outcome regression with an arm term.
pub fn suite_for(ds: &TrialDataset, misspec: SuiteMisspec) -> NuisanceSpecSuite {
    let kk = ds.grid.k;
    let time_term = if kk > 1 { Some(Term::TimeIndex) } else { None };

    let mut d_terms = vec![Term::Intercept];
    d_terms.extend(time_term.clone());
    if !misspec.treatment_models_drop_baseline {
        d_terms.extend(baseline_terms(ds));
    }
    d_terms.extend(lag_terms(ds));
    let d_model = ModelSpec {
        response: ResponseChannel::Event,
        terms: d_terms,
        link: Link::Logit,
        stratify_by_arm: true,
    };

    let l_models = ds
        .tv_names
        .iter()
        .map(|name| {
            let mut terms = vec![Term::Intercept, Term::Arm];
            terms.extend(time_term.clone());
            if !misspec.treatment_models_drop_baseline {
                terms.extend(baseline_terms(ds));
            }
            terms.extend(lag_terms(ds));
            ModelSpec {
                response: ResponseChannel::Covariate { name: name.clone() },
                terms,
                link: Link::Logit,
                stratify_by_arm: false,
            }
        })
        .collect();

    let c_model = if ds.has_censoring() {
        let mut terms = vec![Term::Intercept, Term::Arm];
        terms.extend(baseline_terms(ds));
        terms.extend(lag_terms(ds));
        Some(ModelSpec {
            response: ResponseChannel::Censoring,
            terms,
            link: Link::Logit,
            stratify_by_arm: false,
        })
    } else {
        None
    };

    let mut y_terms = vec![Term::Intercept, Term::Arm];
    y_terms.extend(baseline_terms(ds));
    if !misspec.outcome_drops_lag {
        y_terms.extend(lag_terms(ds));
    }
    let y_model = ModelSpec {
        response: ResponseChannel::Outcome,
        terms: y_terms,
        link: Link::Identity,
        stratify_by_arm: false,
    };

    NuisanceSpecSuite {
        d_model,
        l_models,
        c_model,
        y_model,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::exact_two_arm_survival;

    #[test]
    fn presets_validate() {
        for law in [
            desk_law_k1(),
            null_law_k1(),
            monotone_law_k1(),
            no_event_effect_law_k1(),
            censored_law_k1(),
            swog_like_law(),
        ] {
            law.validate().unwrap();
        }
    }

    #[test]
    fn swog_survival_targets() {
        let law = swog_like_law();
        let s1 = exact_two_arm_survival(&law, 1).unwrap();
        let s0 = exact_two_arm_survival(&law, 0).unwrap();
        assert!((s1 - 0.79).abs() < 0.005, "arm 1 survival {s1}");
        assert!((s0 - 0.72).abs() < 0.005, "arm 0 survival {s0}");
    }
}
