//! Sample estimators of the conditional-on-survival counterfactual mean:
//! outcome regression, weighted, and doubly robust, each with its censoring
//! adjustment. All estimating equations are linear in the estimand, so each
//! is solved in closed form; the per-individual estimating-function values
//! are exposed for testability.

use serde::{Deserialize, Serialize};

use crate::data::{DesignKind, LongitudinalRecord, OrderingVariant, TrialDataset};
use crate::error::{EstimError, FitError};
use crate::nuisance::NuisanceSuiteFit;
use crate::util::{quantile_sorted, KahanSum};

/// Floor for fitted probabilities appearing in weight denominators.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimandTarget {
    pub a_y: u8,
    pub a_d: u8,
}

impl EstimandTarget {
    pub fn new(a_y: u8, a_d: u8) -> Self {
        Self { a_y, a_d }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Or,
    Ipw,
    Dr,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EstimatorKind::Or => "OR",
            EstimatorKind::Ipw => "IPW",
            EstimatorKind::Dr => "DR",
        };
        write!(f, "{s}")
    }
}

/// Summary of realized weights over the estimation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiInfo {
    pub lo: f64,
    pub hi: f64,
    pub method: String,
    pub n_boot: usize,
    pub n_failed: usize,
}

/// Compact description of the nuisance fits behind an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSummary {
    pub kind: String,
    pub channels: Vec<ChannelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: String,
    pub n_fits: usize,
    pub converged: bool,
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub target: EstimandTarget,
    /// The subtracted target, for effect contrasts.
    pub contrast: Option<EstimandTarget>,
    pub estimator: EstimatorKind,
    pub point: f64,
    /// Kish effective sample size of the weighted estimation set.
    pub n_effective: f64,
    pub weight_summary: Option<WeightSummary>,
    pub nuisance: Option<NuisanceSummary>,
    /// Empirical mean of the estimating function at the solution.
    pub ee_mean: f64,
    pub ci: Option<CiInfo>,
}

/// Options shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Percentile cap on weights (for example 99.0); off by default, and the
    /// equivalence tests rely on it staying off.
    pub weight_cap_percentile: Option<f64>,
    /// When false, the outcome-regression estimator deliberately ignores the
    /// censoring mechanism and averages over uncensored survivors only.
    pub censor_adjusted: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            weight_cap_percentile: None,
            censor_adjusted: true,
        }
    }
}

fn require_two_arm(ds: &TrialDataset) -> Result<(), EstimError> {
    if ds.design() != DesignKind::TwoArm {
        return Err(EstimError::NotTwoArm);
    }
    Ok(())
}

fn nuisance_summary(suite: &NuisanceSuiteFit) -> NuisanceSummary {
    match suite {
        NuisanceSuiteFit::Saturated(_) => NuisanceSummary {
            kind: "saturated".to_string(),
            channels: Vec::new(),
        },
        NuisanceSuiteFit::Glm(s) => {
            let mut channels = Vec::new();
            let mut push = |label: String, ch: &crate::nuisance::FittedChannel| {
                let fits = ch.fits();
                channels.push(ChannelSummary {
                    channel: label,
                    n_fits: fits.len(),
                    converged: fits.iter().all(|f| f.converged),
                    n_used: fits.iter().map(|f| f.n_used).sum(),
                });
            };
            push("D".to_string(), &s.d);
            for (name, ch) in &s.l {
                push(format!("L_{name}"), ch);
            }
            if let Some(c) = &s.c {
                push("C".to_string(), c);
            }
            push("Y".to_string(), &s.y);
            NuisanceSummary {
                kind: "glm".to_string(),
                channels,
            }
        }
    }
}

fn guard(p: f64) -> Result<f64, EstimError> {
    if !(p >= POSITIVITY_FLOOR) {
        return Err(EstimError::ExtremePositivity {
            prob: p,
            min: POSITIVITY_FLOOR,
        });
    }
    Ok(p)
}

/// Event-survival and event-block density ratio weight
/// (target arm products over factual arm products).
fn dl_weight(
    ds: &TrialDataset,
    suite: &NuisanceSuiteFit,
    rec: &LongitudinalRecord,
    a_y: u8,
    a_d: u8,
) -> Result<f64, EstimError> {
    let kk = ds.grid.k;
    let mut w = 1.0;
    for k in 0..=kk {
        let s_ad = suite.event_survival(ds, rec, k, a_d)?;
        let s_ay = guard(suite.event_survival(ds, rec, k, a_y)?)?;
        w *= s_ad / s_ay;
    }
    for c in ds.ad_component_indices() {
        for k in 0..kk {
            let p_ad = suite.density_prob(ds, rec, k, c, a_d)?;
            let p_ay = guard(suite.density_prob(ds, rec, k, c, a_y)?)?;
            w *= p_ad / p_ay;
        }
    }
    Ok(w)
}

/// Inverse-probability-of-censoring weight at the factual arm; 1 for
/// uncensored data.
fn censor_weight(
    ds: &TrialDataset,
    suite: &NuisanceSuiteFit,
    rec: &LongitudinalRecord,
    a_y: u8,
) -> Result<f64, EstimError> {
    if !ds.has_censoring() {
        return Ok(1.0);
    }
    if !suite.has_censor_model() {
        return Err(EstimError::MissingNuisance {
            channel: "C".to_string(),
        });
    }
    let mut w = 1.0;
    match ds.grid.ordering {
        OrderingVariant::StandardCdl => {
            for k in 0..=ds.grid.k {
                let sc = guard(suite.interim_censor_survival(ds, rec, k, a_y)?)?;
                w /= sc;
            }
        }
        OrderingVariant::TerminalDBeforeC => {
            let sc = guard(suite.terminal_censor_survival(ds, rec, a_y)?)?;
            w /= sc;
        }
    }
    Ok(w)
}

fn summarize_weights(weights: &[f64]) -> (f64, Option<WeightSummary>) {
    if weights.is_empty() {
        return (0.0, None);
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sum: f64 = weights.iter().sum();
    let sumsq: f64 = weights.iter().map(|w| w * w).sum();
    let n_eff = if sumsq > 0.0 { sum * sum / sumsq } else { 0.0 };
    let summary = WeightSummary {
        min: sorted[0],
        max: *sorted.last().unwrap(),
        mean: sum / weights.len() as f64,
        p99: quantile_sorted(&sorted, 0.99),
    };
    (n_eff, Some(summary))
}

fn apply_cap(weights: &mut [f64], cap_percentile: Option<f64>) {
    if let Some(q) = cap_percentile {
        let mut sorted = weights.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cap = quantile_sorted(&sorted, q / 100.0);
        for w in weights.iter_mut() {
            if *w > cap {
                *w = cap;
            }
        }
    }
}

/// Whether a record belongs to the survivor averaging set in arm `a_d`:
/// event-free at the end, with the full covariate history observed. Under
/// the terminal ordering that is every survivor regardless of the terminal
/// censoring indicator (unless the adjustment is deliberately switched off);
/// under the standard ordering it is uncensored survivors.
fn in_survivor_average_set(
    ds: &TrialDataset,
    rec: &LongitudinalRecord,
    censor_adjusted: bool,
) -> bool {
    if !rec.survived() {
        return false;
    }
    match ds.grid.ordering {
        OrderingVariant::TerminalDBeforeC => censor_adjusted || rec.uncensored(),
        OrderingVariant::StandardCdl => rec.uncensored(),
    }
}

/// Outcome-regression estimator: the average of outcome-model predictions,
/// evaluated at the outcome-pathway arm, over survivors in the event-pathway
/// arm.
pub fn estimate_or(
    ds: &TrialDataset,
    suite: &NuisanceSuiteFit,
    target: EstimandTarget,
    opts: &EstimatorOptions,
) -> Result<EstimateReport, EstimError> {
    require_two_arm(ds)?;
    let mut preds = Vec::new();
    for rec in &ds.records {
        if rec.arm.two_arm() != Some(target.a_d)
            || !in_survivor_average_set(ds, rec, opts.censor_adjusted)
        {
            continue;
        }
        preds.push(suite.outcome_prediction(ds, rec, target.a_y)?);
    }
    if preds.is_empty() {
        return Err(EstimError::NoSurvivors { arm: target.a_d });
    }
    let mut sum = KahanSum::new();
    for &p in &preds {
        sum.add(p);
    }
    let point = sum.value() / preds.len() as f64;
    let mut ee = KahanSum::new();
    for &p in &preds {
        ee.add(p - point);
    }
    Ok(EstimateReport {
        target,
        contrast: None,
        estimator: EstimatorKind::Or,
        point,
        n_effective: preds.len() as f64,
        weight_summary: None,
        nuisance: Some(nuisance_summary(suite)),
        ee_mean: ee.value() / preds.len() as f64,
        ci: None,
    })
}

/// Weighted estimator: the weighted mean of observed outcomes over
/// uncensored survivors in the outcome-pathway arm, with weights equal to
/// the censoring weight times the event-survival and event-block density
/// ratios.
pub fn estimate_ipw(
    ds: &TrialDataset,
    suite: &NuisanceSuiteFit,
    target: EstimandTarget,
    opts: &EstimatorOptions,
) -> Result<EstimateReport, EstimError> {
    require_two_arm(ds)?;
    let mut weights = Vec::new();
    let mut outcomes = Vec::new();
    for rec in &ds.records {
        if rec.arm.two_arm() != Some(target.a_y) || !rec.survived() || !rec.uncensored() {
            continue;
        }
        let y = rec.outcome.expect("uncensored survivor has outcome");
        let w = dl_weight(ds, suite, rec, target.a_y, target.a_d)?
            * censor_weight(ds, suite, rec, target.a_y)?;
        weights.push(w);
        outcomes.push(y);
    }
    if weights.is_empty() {
        return Err(EstimError::NoSurvivors { arm: target.a_y });
    }
    apply_cap(&mut weights, opts.weight_cap_percentile);
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for (&w, &y) in weights.iter().zip(&outcomes) {
        num.add(w * y);
        den.add(w);
    }
    let point = num.value() / den.value();
    let mut ee = KahanSum::new();
    for (&w, &y) in weights.iter().zip(&outcomes) {
        ee.add(w * (y - point));
    }
    let (n_effective, weight_summary) = summarize_weights(&weights);
    Ok(EstimateReport {
        target,
        contrast: None,
        estimator: EstimatorKind::Ipw,
        point,
        n_effective,
        weight_summary,
        nuisance: Some(nuisance_summary(suite)),
        ee_mean: ee.value() / weights.len() as f64,
        ci: None,
    })
}

/// Doubly robust estimator: outcome-model term over the event-pathway arm
/// plus a weighted residual correction over the outcome-pathway arm, scaled
/// by the sample survival fraction in the event-pathway arm.
pub fn estimate_dr(
    ds: &TrialDataset,
    suite: &NuisanceSuiteFit,
    target: EstimandTarget,
    _opts: &EstimatorOptions,
) -> Result<EstimateReport, EstimError> {
    require_two_arm(ds)?;
    let (a_y, a_d) = (target.a_y, target.a_d);

    let mut n_ad = 0usize;
    let mut n_ad_surv = 0usize;
    let mut term1 = KahanSum::new();
    let mut n_ay = 0usize;
    let mut term2 = KahanSum::new();
    let mut weights = Vec::new();

    for rec in &ds.records {
        if rec.arm.two_arm() == Some(a_d) {
            n_ad += 1;
            if in_survivor_average_set(ds, rec, true) {
                n_ad_surv += 1;
                term1.add(suite.outcome_prediction(ds, rec, a_y)?);
            }
        }
        // Both branches apply to the same record when a_y == a_d.
        if rec.arm.two_arm() == Some(a_y) {
            n_ay += 1;
            if rec.survived() && rec.uncensored() {
                let y = rec.outcome.expect("uncensored survivor has outcome");
                let pred = suite.outcome_prediction(ds, rec, a_y)?;
                let w = dl_weight(ds, suite, rec, a_y, a_d)?
                    * censor_weight(ds, suite, rec, a_y)?;
                weights.push(w);
                term2.add(w * (y - pred));
            }
        }
    }
    if n_ad_surv == 0 {
        return Err(EstimError::NoSurvivors { arm: a_d });
    }
    if n_ay == 0 || weights.is_empty() {
        return Err(EstimError::NoSurvivors { arm: a_y });
    }
    let beta_hat = n_ad_surv as f64 / n_ad as f64;
    let t1 = term1.value() / n_ad as f64;
    let t2 = term2.value() / n_ay as f64;
    let point = (t1 + t2) / beta_hat;

    let residuals = estimating_residuals(ds, suite, target, EstimatorKind::Dr, point)?;
    let mut ee = KahanSum::new();
    for u in &residuals {
        ee.add(*u);
    }
    let ee_mean = ee.value() / ds.n() as f64;

    let (n_effective, weight_summary) = summarize_weights(&weights);
    Ok(EstimateReport {
        target,
        contrast: None,
        estimator: EstimatorKind::Dr,
        point,
        n_effective,
        weight_summary,
        nuisance: Some(nuisance_summary(suite)),
        ee_mean,
        ci: None,
    })
}

/// Difference of two targets sharing the event-pathway arm, computed with
/// shared nuisance fits.
pub fn estimate_effect(
    ds: &TrialDataset,
    suite: &NuisanceSuiteFit,
    target_1: EstimandTarget,
    target_0: EstimandTarget,
    estimator: EstimatorKind,
    opts: &EstimatorOptions,
) -> Result<EstimateReport, EstimError> {
    if target_1.a_d != target_0.a_d {
        return Err(EstimError::MismatchedAD(target_1.a_d, target_0.a_d));
    }
    let r1 = estimate(ds, suite, target_1, estimator, opts)?;
    let r0 = estimate(ds, suite, target_0, estimator, opts)?;
    Ok(EstimateReport {
        target: target_1,
        contrast: Some(target_0),
        estimator,
        point: r1.point - r0.point,
        n_effective: r1.n_effective.min(r0.n_effective),
        weight_summary: r1.weight_summary,
        nuisance: r1.nuisance,
        ee_mean: r1.ee_mean.abs().max(r0.ee_mean.abs()),
        ci: None,
    })
}

/// Dispatch by estimator kind.
pub fn estimate(
    ds: &TrialDataset,
    suite: &NuisanceSuiteFit,
    target: EstimandTarget,
    estimator: EstimatorKind,
    opts: &EstimatorOptions,
) -> Result<EstimateReport, EstimError> {
    match estimator {
        EstimatorKind::Or => estimate_or(ds, suite, target, opts),
        EstimatorKind::Ipw => estimate_ipw(ds, suite, target, opts),
        EstimatorKind::Dr => estimate_dr(ds, suite, target, opts),
    }
}

/// Per-record estimating-function values at a candidate estimand value.
/// Solving `sum = 0` over these reproduces the closed-form estimators.
pub fn estimating_residuals(
    ds: &TrialDataset,
    suite: &NuisanceSuiteFit,
    target: EstimandTarget,
    estimator: EstimatorKind,
    nu: f64,
) -> Result<Vec<f64>, EstimError> {
    require_two_arm(ds)?;
    let mut out = Vec::with_capacity(ds.n());
    match estimator {
        EstimatorKind::Or => {
            for rec in &ds.records {
                let mut u = 0.0;
                if rec.arm.two_arm() == Some(target.a_d)
                    && in_survivor_average_set(ds, rec, true)
                {
                    u = suite.outcome_prediction(ds, rec, target.a_y)? - nu;
                }
                out.push(u);
            }
        }
        EstimatorKind::Ipw => {
            for rec in &ds.records {
                let mut u = 0.0;
                if rec.arm.two_arm() == Some(target.a_y) && rec.survived() && rec.uncensored() {
                    let y = rec.outcome.expect("uncensored survivor has outcome");
                    let w = dl_weight(ds, suite, rec, target.a_y, target.a_d)?
                        * censor_weight(ds, suite, rec, target.a_y)?;
                    u = w * (y - nu);
                }
                out.push(u);
            }
        }
        EstimatorKind::Dr => {
            let n = ds.n() as f64;
            let mut n_ad = 0usize;
            let mut n_ad_surv = 0usize;
            let mut n_ay = 0usize;
            for rec in &ds.records {
                match rec.arm.two_arm() {
                    Some(a) if a == target.a_d => {
                        n_ad += 1;
                        if in_survivor_average_set(ds, rec, true) {
                            n_ad_surv += 1;
                        }
                    }
                    _ => {}
                }
                if rec.arm.two_arm() == Some(target.a_y) {
                    n_ay += 1;
                }
            }
            let beta_hat = n_ad_surv as f64 / n_ad as f64;
            for rec in &ds.records {
                let mut u = 0.0;
                if rec.arm.two_arm() == Some(target.a_d)
                    && in_survivor_average_set(ds, rec, true)
                {
                    let pred = suite.outcome_prediction(ds, rec, target.a_y)?;
                    u += pred * (n / n_ad as f64);
                }
                if rec.arm.two_arm() == Some(target.a_y) && rec.survived() && rec.uncensored() {
                    let y = rec.outcome.expect("uncensored survivor has outcome");
                    let pred = suite.outcome_prediction(ds, rec, target.a_y)?;
                    let w = dl_weight(ds, suite, rec, target.a_y, target.a_d)?
                        * censor_weight(ds, suite, rec, target.a_y)?;
                    u += w * (y - pred) * (n / n_ay as f64);
                }
                out.push(u / beta_hat - nu);
            }
        }
    }
    Ok(out)
}

/// Plain survivor outcome mean in one arm (uncensored survivors), the
/// nonparametric rows of the results table.
pub fn survivor_mean(ds: &TrialDataset, a: u8) -> Result<(f64, usize), EstimError> {
    require_two_arm(ds)?;
    let mut sum = KahanSum::new();
    let mut n = 0usize;
    for rec in &ds.records {
        if rec.arm.two_arm() == Some(a) && rec.survived() && rec.uncensored() {
            sum.add(rec.outcome.expect("uncensored survivor has outcome"));
            n += 1;
        }
    }
    if n == 0 {
        return Err(EstimError::NoSurvivors { arm: a });
    }
    Ok((sum.value() / n as f64, n))
}

/// Convenience: fitted-suite constructor used by bootstrap closures.
pub fn fit_and_estimate(
    ds: &TrialDataset,
    specs: &crate::nuisance::NuisanceSpecSuite,
    target: EstimandTarget,
    estimator: EstimatorKind,
    opts: &EstimatorOptions,
) -> Result<EstimateReport, EstimError> {
    let fit = crate::nuisance::fit_nuisance_suite(ds, specs).map_err(map_fit)?;
    estimate(ds, &NuisanceSuiteFit::Glm(fit), target, estimator, opts)
}

fn map_fit(e: FitError) -> EstimError {
    EstimError::Fit(e)
}
