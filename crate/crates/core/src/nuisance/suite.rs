//! Fitting and evaluation of the whole nuisance model suite: event hazard,
//! covariate densities, censoring, and outcome regression.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LongitudinalRecord, TrialDataset};
use crate::error::FitError;
use crate::identification::DiscreteLaw;

use super::design::{design_row, Link, ModelSpec, ResponseChannel};
use super::glm::{fit_glm, fit_glm_stratified, NuisanceFit};

/// One channel's fitted model: a single pooled fit or one fit per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedChannel {
    Single(NuisanceFit),
    ByArm { a0: NuisanceFit, a1: NuisanceFit },
}

impl FittedChannel {
    pub fn fits(&self) -> Vec<&NuisanceFit> {
        match self {
            FittedChannel::Single(f) => vec![f],
            FittedChannel::ByArm { a0, a1 } => vec![a0, a1],
        }
    }

    pub fn all_converged(&self) -> bool {
        self.fits().iter().all(|f| f.converged)
    }

    /// Predicts at interval `k` for a record, evaluated at arm `a`: the
    /// stratified variant selects the stratum fit, the pooled variant
    /// overrides the arm term.
    pub fn predict(
        &self,
        ds: &TrialDataset,
        rec: &LongitudinalRecord,
        k: usize,
        a: u8,
    ) -> Result<f64, FitError> {
        let fit = match self {
            FittedChannel::Single(f) => f,
            FittedChannel::ByArm { a0, a1 } => {
                if a == 0 {
                    a0
                } else {
                    a1
                }
            }
        };
        let x = design_row(ds, rec, k, Some(a), &fit.spec.terms)?;
        Ok(fit.predict_x(&x))
    }
}

/// The models required for estimation on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpecSuite {
    pub d_model: ModelSpec,
    /// One density model per time-varying covariate component.
    pub l_models: Vec<ModelSpec>,
    pub c_model: Option<ModelSpec>,
    pub y_model: ModelSpec,
}

/// All fitted nuisance models, or the exact saturated (cell-frequency)
/// alternative.
#[derive(Debug, Clone, PartialEq)]
pub enum NuisanceSuiteFit {
    Glm(GlmSuiteFit),
    /// Empirical tables: the maximum likelihood fit of fully saturated
    /// models on discrete data.
    Saturated(DiscreteLaw),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmSuiteFit {
    pub d: FittedChannel,
    /// `(component name, fit)` aligned with the dataset's `tv_names`.
    pub l: Vec<(String, FittedChannel)>,
    pub c: Option<FittedChannel>,
    pub y: FittedChannel,
    /// Channels for which no model was supplied although the data need one.
    pub coverage_gaps: Vec<String>,
}

impl GlmSuiteFit {
    pub fn all_converged(&self) -> bool {
        self.d.all_converged()
            && self.l.iter().all(|(_, f)| f.all_converged())
            && self.c.as_ref().map_or(true, |f| f.all_converged())
            && self.y.all_converged()
    }
}

fn fit_channel(ds: &TrialDataset, spec: &ModelSpec) -> Result<FittedChannel, FitError> {
    let wrap = |source: FitError| FitError::Channel {
        channel: spec.response.label(),
        source: Box::new(source),
    };
    if spec.stratify_by_arm {
        let a0 = fit_glm_stratified(ds, spec, 0).map_err(wrap)?;
        let a1 = fit_glm_stratified(ds, spec, 1).map_err(wrap)?;
        Ok(FittedChannel::ByArm { a0, a1 })
    } else {
        Ok(FittedChannel::Single(fit_glm(ds, spec).map_err(wrap)?))
    }
}

/// Fits every model in the suite (channels in parallel) and reports coverage
/// gaps: a censoring channel with observed censoring but no model, or
/// density models missing for some covariate component.
pub fn fit_nuisance_suite(
    ds: &TrialDataset,
    specs: &NuisanceSpecSuite,
) -> Result<GlmSuiteFit, FitError> {
    let mut jobs: Vec<(&ModelSpec, &str)> = vec![(&specs.d_model, "D"), (&specs.y_model, "Y")];
    for m in &specs.l_models {
        jobs.push((m, "L"));
    }
    if let Some(c) = &specs.c_model {
        jobs.push((c, "C"));
    }
    let fitted: Vec<Result<FittedChannel, FitError>> = jobs
        .par_iter()
        .map(|(spec, _)| fit_channel(ds, spec))
        .collect();
    let mut iter = fitted.into_iter();
    let d = iter.next().unwrap()?;
    let y = iter.next().unwrap()?;
    let mut l = Vec::new();
    for m in &specs.l_models {
        let name = match &m.response {
            ResponseChannel::Covariate { name } => name.clone(),
            other => {
                return Err(FitError::Formula(format!(
                    "l_models must target covariate channels, got {}",
                    other.label()
                )))
            }
        };
        l.push((name, iter.next().unwrap()?));
    }
    let c = if specs.c_model.is_some() {
        Some(iter.next().unwrap()?)
    } else {
        None
    };

    let mut coverage_gaps = Vec::new();
    if ds.has_censoring() && c.is_none() {
        coverage_gaps.push("C".to_string());
    }
    for name in &ds.tv_names {
        if !l.iter().any(|(n, _)| n == name) {
            coverage_gaps.push(format!("L_{name}"));
        }
    }
    Ok(GlmSuiteFit {
        d,
        l,
        c,
        y,
        coverage_gaps,
    })
}

impl NuisanceSuiteFit {
    /// `Ê(Y | D_{K+1} = 0, C_{K+1} = 0, history, A = a_y)` for a survivor.
    pub fn outcome_prediction(
        &self,
        ds: &TrialDataset,
        rec: &LongitudinalRecord,
        a_y: u8,
    ) -> Result<f64, FitError> {
        match self {
            NuisanceSuiteFit::Glm(s) => s.y.predict(ds, rec, ds.grid.k, a_y),
            NuisanceSuiteFit::Saturated(law) => {
                let hist = record_history(law, rec, ds.grid.k).ok_or_else(|| {
                    FitError::MissingPredictor {
                        term: "history".to_string(),
                    }
                })?;
                finite_or(law.outcome_mean(hist, a_y), "E[Y]")
            }
        }
    }

    /// `P̂r(D_{k+1} = 0 | at risk, history, A = a)`.
    pub fn event_survival(
        &self,
        ds: &TrialDataset,
        rec: &LongitudinalRecord,
        k: usize,
        a: u8,
    ) -> Result<f64, FitError> {
        match self {
            NuisanceSuiteFit::Glm(s) => Ok(1.0 - s.d.predict(ds, rec, k, a)?),
            NuisanceSuiteFit::Saturated(law) => {
                let hist = record_history(law, rec, k).ok_or_else(|| {
                    FitError::MissingPredictor {
                        term: "history".to_string(),
                    }
                })?;
                finite_or(1.0 - law.event_prob(k, hist, a), "D")
            }
        }
    }

    /// pmf of the observed `L_{k+1}` component `c` under arm `a`.
    pub fn density_prob(
        &self,
        ds: &TrialDataset,
        rec: &LongitudinalRecord,
        k: usize,
        c: usize,
        a: u8,
    ) -> Result<f64, FitError> {
        let observed = rec.covariates[k]
            .as_ref()
            .ok_or_else(|| FitError::MissingPredictor {
                term: format!("L_{}", ds.tv_names[c]),
            })?;
        match self {
            NuisanceSuiteFit::Glm(s) => {
                let (_, channel) = s
                    .l
                    .iter()
                    .find(|(n, _)| *n == ds.tv_names[c])
                    .ok_or_else(|| FitError::MissingPredictor {
                        term: format!("L_{}", ds.tv_names[c]),
                    })?;
                let p1 = channel.predict(ds, rec, k, a)?;
                Ok(if observed[c] > 0.5 { p1 } else { 1.0 - p1 })
            }
            NuisanceSuiteFit::Saturated(law) => {
                let hist = record_history(law, rec, k).ok_or_else(|| {
                    FitError::MissingPredictor {
                        term: "history".to_string(),
                    }
                })?;
                let ad_state =
                    law.ad_state_of_values(observed)
                        .ok_or_else(|| FitError::MissingPredictor {
                            term: "ad-block".to_string(),
                        })?;
                let vi = law.tv_support[c]
                    .iter()
                    .position(|&s| s == observed[c])
                    .ok_or_else(|| FitError::MissingPredictor {
                        term: format!("L_{}", ds.tv_names[c]),
                    })?;
                finite_or(law.density_prob(k, c, hist, ad_state, a, vi), "L")
            }
        }
    }

    /// `P̂r(C_{k+1} = 0 | at risk, history, A = a)` under the standard
    /// ordering; 1 when the suite has no censoring model.
    pub fn interim_censor_survival(
        &self,
        ds: &TrialDataset,
        rec: &LongitudinalRecord,
        k: usize,
        a: u8,
    ) -> Result<f64, FitError> {
        match self {
            NuisanceSuiteFit::Glm(s) => match &s.c {
                Some(c) => Ok(1.0 - c.predict(ds, rec, k, a)?),
                None => Ok(1.0),
            },
            NuisanceSuiteFit::Saturated(law) => {
                if law.interim_censor.is_none() {
                    return Ok(1.0);
                }
                let hist = record_history(law, rec, k).ok_or_else(|| {
                    FitError::MissingPredictor {
                        term: "history".to_string(),
                    }
                })?;
                finite_or(1.0 - law.interim_censor_prob(k, hist, a), "C")
            }
        }
    }

    /// `P̂r(C = 0 | D_{K+1} = 0, history, A = a)` under the terminal
    /// ordering; 1 when the suite has no censoring model.
    pub fn terminal_censor_survival(
        &self,
        ds: &TrialDataset,
        rec: &LongitudinalRecord,
        a: u8,
    ) -> Result<f64, FitError> {
        match self {
            NuisanceSuiteFit::Glm(s) => match &s.c {
                Some(c) => Ok(1.0 - c.predict(ds, rec, ds.grid.k, a)?),
                None => Ok(1.0),
            },
            NuisanceSuiteFit::Saturated(law) => {
                if law.terminal_censor.is_none() {
                    return Ok(1.0);
                }
                let hist = record_history(law, rec, ds.grid.k).ok_or_else(|| {
                    FitError::MissingPredictor {
                        term: "history".to_string(),
                    }
                })?;
                finite_or(1.0 - law.terminal_censor_prob(hist, a), "C")
            }
        }
    }

    pub fn has_censor_model(&self) -> bool {
        match self {
            NuisanceSuiteFit::Glm(s) => s.c.is_some(),
            NuisanceSuiteFit::Saturated(law) => {
                law.interim_censor.is_some() || law.terminal_censor.is_some()
            }
        }
    }
}

fn finite_or(v: f64, what: &str) -> Result<f64, FitError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FitError::MissingPredictor {
            term: format!("{what} cell has no data"),
        })
    }
}

/// History index of a record's observed prefix `(l0, l_1..l_t)`.
fn record_history(law: &DiscreteLaw, rec: &LongitudinalRecord, t: usize) -> Option<usize> {
    let mut hist = law.l0_cell_of(&rec.baseline)?;
    for k in 0..t {
        let l = rec.covariates[k].as_ref()?;
        hist = law.extend_history(hist, law.tv_state_of(l)?);
    }
    Some(hist)
}

/// Spec-suite check used by [`fit_nuisance_suite`]'s callers to make sure a
/// logit/identity mismatch fails early.
pub fn check_suite(specs: &NuisanceSpecSuite) -> Result<(), FitError> {
    specs.d_model.check()?;
    for m in &specs.l_models {
        m.check()?;
    }
    if let Some(c) = &specs.c_model {
        c.check()?;
    }
    specs.y_model.check()?;
    match (&specs.d_model.response, &specs.y_model.response) {
        (ResponseChannel::Event, ResponseChannel::Outcome) => {}
        _ => {
            return Err(FitError::Formula(
                "d_model must target D and y_model must target Y".into(),
            ))
        }
    }
    if specs.y_model.link != Link::Identity {
        return Err(FitError::Formula("outcome model uses identity link".into()));
    }
    Ok(())
}
