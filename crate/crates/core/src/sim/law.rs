//! Parametric structural law: the full generative specification for one
//! trial, with the treatment decomposed into an outcome-pathway component
//! `a_Y` and an event-pathway component `a_D`.
//!
//! Event hazards carry no `a_Y` term by construction, so the outcome
//! component cannot reach the truncating event; covariate channels are split
//! by pathway. Controlled violations of these structural restrictions can be
//! injected for falsification and negative-control tests.

use serde::{Deserialize, Serialize};

use crate::data::{OrderingVariant, TimeGrid};
use crate::error::SimError;
use crate::util::expit;

/// Distribution of one baseline covariate component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineDist {
    Bernoulli { p: f64 },
    Gaussian { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub name: String,
    pub dist: BaselineDist,
}

/// Pathway a time-varying covariate belongs to. The channel decides which
/// treatment component enters its structural equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Ay,
    Ad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvCovariateSpec {
    pub name: String,
    pub channel: Channel,
}

/// Logistic hazard for `D_{k+1}` given the history. `a_y` is zero unless an
/// isolation violation has been injected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardCoefs {
    pub intercept: f64,
    pub a_d: f64,
    #[serde(default)]
    pub a_y: f64,
    pub l0: Vec<f64>,
    /// Coefficients on `L_k`; must be empty at `k = 0`.
    pub prev: Vec<f64>,
}

/// Logistic law for one binary time-varying covariate component at `k+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCoefs {
    pub intercept: f64,
    /// Coefficient on the component's own pathway arm.
    pub arm: f64,
    /// Forbidden cross-pathway arm dependence; zero unless injected.
    #[serde(default)]
    pub wrong_arm: f64,
    pub l0: Vec<f64>,
    /// Coefficients on `L_k`; must be empty at `k = 0`.
    pub prev: Vec<f64>,
    /// For outcome-pathway components only: coefficients on the same-time
    /// event-pathway components, which are drawn first within the interval.
    #[serde(default)]
    pub same_time_ad: Vec<f64>,
}

/// Logistic censoring hazard. May depend on both treatment components and
/// the observed history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensorCoefs {
    pub intercept: f64,
    #[serde(default)]
    pub a_y: f64,
    #[serde(default)]
    pub a_d: f64,
    pub l0: Vec<f64>,
    /// Coefficients on the most recent time-varying covariates.
    pub prev: Vec<f64>,
}

/// Censoring mechanism, matching the grid's temporal ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CensoringSpec {
    /// No loss to follow-up.
    None,
    /// One interim hazard per interval (`C_{k+1}` drawn before `D_{k+1}`).
    Interim { coefs: Vec<CensorCoefs> },
    /// A single terminal indicator drawn after `D_{K+1}` among survivors.
    Terminal { coefs: CensorCoefs },
}

/// Gaussian outcome with identity link, measured at `K+1` for uncensored
/// survivors. `a_d_direct` is zero unless a dismissible-condition violation
/// has been injected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCoefs {
    pub intercept: f64,
    pub a_y: f64,
    #[serde(default)]
    pub a_d_direct: f64,
    pub l0: Vec<f64>,
    /// Coefficients on `L_K`; empty when `K = 0`.
    pub last: Vec<f64>,
    pub sigma: f64,
}

/// Logistic two-arm assignment probability given baseline covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignCoefs {
    pub intercept: f64,
    pub l0: Vec<f64>,
}

/// Structural violations that can be injected into a law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// The outcome-pathway component gains a direct effect on the event
    /// hazards.
    BreakAyIsolation,
    /// The event-pathway component gains a direct effect on the outcome.
    BreakDismissible1,
    /// Each covariate channel gains a dependence on the wrong treatment
    /// component.
    BreakDismissible3,
    /// Joint assignment of the two components to the same value no longer
    /// reproduces the original treatment: four-arm records get shifted event
    /// hazards and outcome means.
    BreakModifiedTreatment,
}

/// Injected coefficient sizes, chosen large enough that every violation is
/// detectable at the sample sizes used by the falsification tests.
pub const INJECT_AY_ON_HAZARD: f64 = 1.2;
pub const INJECT_AD_ON_OUTCOME: f64 = 8.0;
pub const INJECT_WRONG_ARM_ON_DENSITY: f64 = 1.5;
pub const INJECT_MT_HAZARD_SHIFT: f64 = 0.8;
pub const INJECT_MT_OUTCOME_SHIFT: f64 = 4.0;

/// Full parametric generative specification of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralLaw {
    pub grid: TimeGrid,
    pub baseline: Vec<BaselineSpec>,
    pub covariates: Vec<TvCovariateSpec>,
    /// `hazard_d[k]` drives `D_{k+1}`, `k = 0..K`.
    pub hazard_d: Vec<HazardCoefs>,
    /// `density_l[k][c]` drives component `c` of `L_{k+1}`, `k = 0..K-1`.
    pub density_l: Vec<Vec<DensityCoefs>>,
    pub censoring: CensoringSpec,
    pub outcome: OutcomeCoefs,
    /// Whether the event hazards are constructed so that the counterfactual
    /// event indicators are ordered (`a_D = 1` never worse) pointwise in the
    /// exogenous noise. Requires hazards free of time-varying covariates and
    /// a non-positive `a_d` coefficient, checked by [`StructuralLaw::validate`].
    #[serde(default)]
    pub monotone: bool,
    /// Two-arm assignment model; `None` means marginal 1:1 randomization.
    #[serde(default)]
    pub assignment: Option<AssignCoefs>,
    /// Set by [`ViolationKind::BreakModifiedTreatment`] injection.
    #[serde(default)]
    pub modified_treatment_break: bool,
}

impl StructuralLaw {
    pub fn n_baseline(&self) -> usize {
        self.baseline.len()
    }

    pub fn n_tv(&self) -> usize {
        self.covariates.len()
    }

    pub fn tv_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    pub fn baseline_names(&self) -> Vec<String> {
        self.baseline.iter().map(|b| b.name.clone()).collect()
    }

    pub fn all_baseline_binary(&self) -> bool {
        self.baseline
            .iter()
            .all(|b| matches!(b.dist, BaselineDist::Bernoulli { .. }))
    }

    /// Indices of event-pathway components, in draw order.
    pub fn ad_components(&self) -> Vec<usize> {
        self.covariates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.channel == Channel::Ad)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn ay_components(&self) -> Vec<usize> {
        self.covariates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.channel == Channel::Ay)
            .map(|(i, _)| i)
            .collect()
    }

    /// Returns a copy of the law with the given violation injected.
    pub fn with_violation(&self, kind: ViolationKind) -> StructuralLaw {
        let mut law = self.clone();
        match kind {
            ViolationKind::BreakAyIsolation => {
                for h in &mut law.hazard_d {
                    h.a_y += INJECT_AY_ON_HAZARD;
                }
            }
            ViolationKind::BreakDismissible1 => {
                law.outcome.a_d_direct += INJECT_AD_ON_OUTCOME;
            }
            ViolationKind::BreakDismissible3 => {
                for per_k in &mut law.density_l {
                    for d in per_k.iter_mut() {
                        d.wrong_arm += INJECT_WRONG_ARM_ON_DENSITY;
                    }
                }
            }
            ViolationKind::BreakModifiedTreatment => {
                law.modified_treatment_break = true;
            }
        }
        law
    }

    /// Event hazard `Pr(D_{k+1} = 1 | ...)`.
    ///
    /// `mt_shift` is true for four-arm records of a law with the
    /// modified-treatment break injected.
    pub fn hazard(&self, k: usize, a_y: u8, a_d: u8, l0: &[f64], prev: &[f64], mt_shift: bool) -> f64 {
        let h = &self.hazard_d[k];
        let mut eta = h.intercept + h.a_d * a_d as f64 + h.a_y * a_y as f64;
        eta += dot(&h.l0, l0);
        eta += dot(&h.prev, prev);
        if mt_shift {
            eta += INJECT_MT_HAZARD_SHIFT;
        }
        expit(eta)
    }

    /// Success probability of time-varying component `c` at `k+1`.
    ///
    /// `same_ad` holds the already-drawn same-time event-pathway values (in
    /// [`StructuralLaw::ad_components`] order); only outcome-pathway
    /// components may load on them.
    pub fn density(
        &self,
        k: usize,
        c: usize,
        a_y: u8,
        a_d: u8,
        l0: &[f64],
        prev: &[f64],
        same_ad: &[f64],
    ) -> f64 {
        let d = &self.density_l[k][c];
        let (own, other) = match self.covariates[c].channel {
            Channel::Ay => (a_y, a_d),
            Channel::Ad => (a_d, a_y),
        };
        let mut eta = d.intercept + d.arm * own as f64 + d.wrong_arm * other as f64;
        eta += dot(&d.l0, l0);
        eta += dot(&d.prev, prev);
        eta += dot(&d.same_time_ad, same_ad);
        expit(eta)
    }

    /// Interim censoring hazard `Pr(C_{k+1} = 1 | ...)`; zero when the law
    /// has no interim censoring.
    pub fn interim_censor_hazard(&self, k: usize, a_y: u8, a_d: u8, l0: &[f64], prev: &[f64]) -> f64 {
        match &self.censoring {
            CensoringSpec::Interim { coefs } => {
                let c = &coefs[k];
                let mut eta = c.intercept + c.a_y * a_y as f64 + c.a_d * a_d as f64;
                eta += dot(&c.l0, l0);
                eta += dot(&c.prev, prev);
                expit(eta)
            }
            _ => 0.0,
        }
    }

    /// Terminal censoring probability among survivors; zero unless the law
    /// uses a terminal mechanism.
    pub fn terminal_censor_prob(&self, a_y: u8, a_d: u8, l0: &[f64], last: &[f64]) -> f64 {
        match &self.censoring {
            CensoringSpec::Terminal { coefs } => {
                let mut eta = coefs.intercept + coefs.a_y * a_y as f64 + coefs.a_d * a_d as f64;
                eta += dot(&coefs.l0, l0);
                eta += dot(&coefs.prev, last);
                expit(eta)
            }
            _ => 0.0,
        }
    }

    /// Conditional outcome mean for an uncensored survivor.
    pub fn outcome_mean(&self, a_y: u8, a_d: u8, l0: &[f64], last: &[f64], mt_shift: bool) -> f64 {
        let o = &self.outcome;
        let mut mu = o.intercept + o.a_y * a_y as f64 + o.a_d_direct * a_d as f64;
        mu += dot(&o.l0, l0);
        mu += dot(&o.last, last);
        if mt_shift {
            mu += INJECT_MT_OUTCOME_SHIFT;
        }
        mu
    }

    /// Two-arm assignment probability `Pr(A = 1 | L_0)`.
    pub fn assign_prob(&self, l0: &[f64]) -> f64 {
        match &self.assignment {
            None => 0.5,
            Some(a) => expit(a.intercept + dot(&a.l0, l0)),
        }
    }

    /// Structural consistency and positivity checks.
    pub fn validate(&self) -> Result<(), SimError> {
        let kk = self.grid.k;
        let n0 = self.n_baseline();
        let ntv = self.n_tv();
        if self.hazard_d.len() != kk + 1 {
            return Err(SimError::InvalidLaw(format!(
                "need {} event hazards, got {}",
                kk + 1,
                self.hazard_d.len()
            )));
        }
        if self.density_l.len() != kk {
            return Err(SimError::InvalidLaw(format!(
                "need {} covariate laws, got {}",
                kk,
                self.density_l.len()
            )));
        }
        for b in &self.baseline {
            match b.dist {
                BaselineDist::Bernoulli { p } => {
                    if !(p > 0.0 && p < 1.0) {
                        return Err(SimError::InvalidLaw(format!(
                            "baseline `{}` probability {p} outside (0,1)",
                            b.name
                        )));
                    }
                }
                BaselineDist::Gaussian { mean, sd } => {
                    if !mean.is_finite() || !(sd > 0.0) {
                        return Err(SimError::InvalidLaw(format!(
                            "baseline `{}` has invalid Gaussian parameters",
                            b.name
                        )));
                    }
                }
            }
        }
        let n_ad = self.ad_components().len();
        for (k, h) in self.hazard_d.iter().enumerate() {
            check_lens("hazard_d", k, n0, ntv, &h.l0, &h.prev)?;
            check_finite("hazard_d", &[h.intercept, h.a_d, h.a_y])?;
        }
        for (k, per_comp) in self.density_l.iter().enumerate() {
            if per_comp.len() != ntv {
                return Err(SimError::InvalidLaw(format!(
                    "density_l[{k}] must have one entry per covariate component"
                )));
            }
            for (c, d) in per_comp.iter().enumerate() {
                check_lens("density_l", k, n0, ntv, &d.l0, &d.prev)?;
                check_finite("density_l", &[d.intercept, d.arm, d.wrong_arm])?;
                let is_ad = self.covariates[c].channel == Channel::Ad;
                if is_ad && !d.same_time_ad.is_empty() {
                    return Err(SimError::InvalidLaw(
                        "event-pathway components may not load on same-time values".into(),
                    ));
                }
                if !is_ad && !d.same_time_ad.is_empty() && d.same_time_ad.len() != n_ad {
                    return Err(SimError::InvalidLaw(
                        "same_time_ad length must match the number of event-pathway components"
                            .into(),
                    ));
                }
            }
        }
        match (&self.censoring, self.grid.ordering) {
            (CensoringSpec::Interim { coefs }, OrderingVariant::StandardCdl) => {
                if coefs.len() != kk + 1 {
                    return Err(SimError::InvalidLaw(format!(
                        "need {} interim censoring hazards, got {}",
                        kk + 1,
                        coefs.len()
                    )));
                }
                for (k, c) in coefs.iter().enumerate() {
                    check_lens("censoring", k, n0, ntv, &c.l0, &c.prev)?;
                }
            }
            (CensoringSpec::Interim { .. }, OrderingVariant::TerminalDBeforeC) => {
                return Err(SimError::InvalidLaw(
                    "interim censoring requires standard-cdl ordering".into(),
                ));
            }
            (CensoringSpec::Terminal { coefs }, OrderingVariant::TerminalDBeforeC) => {
                if coefs.l0.len() != n0 || (kk > 0 && coefs.prev.len() != ntv) {
                    return Err(SimError::InvalidLaw(
                        "terminal censoring coefficient lengths do not match".into(),
                    ));
                }
            }
            (CensoringSpec::Terminal { .. }, OrderingVariant::StandardCdl) => {
                return Err(SimError::InvalidLaw(
                    "terminal censoring requires terminal-d-before-c ordering".into(),
                ));
            }
            (CensoringSpec::None, _) => {}
        }
        if self.outcome.l0.len() != n0 {
            return Err(SimError::InvalidLaw("outcome l0 length mismatch".into()));
        }
        let want_last = if kk == 0 { 0 } else { ntv };
        if self.outcome.last.len() != want_last {
            return Err(SimError::InvalidLaw("outcome last-L length mismatch".into()));
        }
        if !(self.outcome.sigma > 0.0) {
            return Err(SimError::InvalidLaw("outcome sigma must be positive".into()));
        }
        if let Some(a) = &self.assignment {
            if a.l0.len() != n0 {
                return Err(SimError::InvalidLaw("assignment l0 length mismatch".into()));
            }
        }
        if self.monotone {
            for (k, h) in self.hazard_d.iter().enumerate() {
                if h.prev.iter().any(|&b| b != 0.0) {
                    return Err(SimError::InvalidLaw(format!(
                        "monotone law: hazard_d[{k}] must not depend on time-varying covariates"
                    )));
                }
                if h.a_d > 0.0 || h.a_y != 0.0 {
                    return Err(SimError::InvalidLaw(format!(
                        "monotone law: hazard_d[{k}] needs a_d <= 0 and no a_y term"
                    )));
                }
            }
        }
        self.check_probability_bounds()?;
        Ok(())
    }

    /// For all-binary laws, enumerates every reachable history and treatment
    /// combination and requires each success probability to stay strictly
    /// inside (0, 1); for laws with Gaussian baselines only finiteness is
    /// checked.
    fn check_probability_bounds(&self) -> Result<(), SimError> {
        if !self.all_baseline_binary() {
            return Ok(());
        }
        const MIN: f64 = 1e-9;
        let n0 = self.n_baseline();
        let ntv = self.n_tv();
        let n_ad = self.ad_components().len();
        let l0_cells = 1usize << n0;
        let prev_cells = 1usize << ntv;
        let ad_cells = 1usize << n_ad;
        let check = |p: f64, what: &str| -> Result<(), SimError> {
            if !(p > MIN && p < 1.0 - MIN) {
                Err(SimError::InvalidLaw(format!(
                    "{what} probability {p:.3e} outside ({MIN:.0e}, 1-{MIN:.0e})"
                )))
            } else {
                Ok(())
            }
        };
        for cell in 0..l0_cells {
            let l0 = bits(cell, n0);
            for prev_cell in 0..prev_cells {
                let prev = bits(prev_cell, ntv);
                for a_y in 0..=1u8 {
                    for a_d in 0..=1u8 {
                        for (k, _) in self.hazard_d.iter().enumerate() {
                            let prev_slice: &[f64] = if k == 0 { &[] } else { &prev };
                            let p = self.hazard(k, a_y, a_d, &l0, prev_slice, false);
                            check(p, "event hazard")?;
                        }
                        for k in 0..self.density_l.len() {
                            let prev_slice: &[f64] = if k == 0 { &[] } else { &prev };
                            for ad_cell in 0..ad_cells {
                                let same_ad = bits(ad_cell, n_ad);
                                for c in 0..ntv {
                                    let p = self
                                        .density(k, c, a_y, a_d, &l0, prev_slice, &same_ad);
                                    check(p, "covariate density")?;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Inner product over the shorter of the two slices; empty coefficient
/// vectors (for example `prev` at `k = 0`) contribute nothing.
fn dot(coefs: &[f64], values: &[f64]) -> f64 {
    coefs.iter().zip(values).map(|(c, v)| c * v).sum()
}

fn bits(cell: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((cell >> i) & 1) as f64).collect()
}

fn check_lens(
    what: &str,
    k: usize,
    n0: usize,
    ntv: usize,
    l0: &[f64],
    prev: &[f64],
) -> Result<(), SimError> {
    if l0.len() != n0 {
        return Err(SimError::InvalidLaw(format!("{what}[{k}] l0 length mismatch")));
    }
    let want_prev = if k == 0 { 0 } else { ntv };
    if prev.len() != want_prev {
        return Err(SimError::InvalidLaw(format!(
            "{what}[{k}] prev length must be {want_prev}"
        )));
    }
    Ok(())
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), SimError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SimError::InvalidLaw(format!("{what} has non-finite coefficient")));
    }
    Ok(())
}
