//! Model specifications and design-matrix construction for the pooled
//! over-time nuisance models.

use serde::{Deserialize, Serialize};

use crate::data::{LongitudinalRecord, OrderingVariant, TrialDataset};
use crate::error::FitError;

/// A predictor term. `Lagged` refers to the most recent time-varying value
/// strictly prior to the response (carried forward if unobserved at that
/// time, and 0 before the first measurement, the pre-progression reference
/// state).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Term {
    Intercept,
    /// The randomized treatment indicator (or the component indicator the
    /// prediction is evaluated at).
    Arm,
    /// Interval index `k`, 0-based.
    TimeIndex,
    Baseline(String),
    Lagged(String),
    /// Product of base terms.
    Interaction(Vec<Term>),
}

impl Term {
    pub fn label(&self) -> String {
        match self {
            Term::Intercept => "1".to_string(),
            Term::Arm => "A".to_string(),
            Term::TimeIndex => "t".to_string(),
            Term::Baseline(n) => format!("L0_{n}"),
            Term::Lagged(n) => format!("L_{n}"),
            Term::Interaction(ts) => ts
                .iter()
                .map(Term::label)
                .collect::<Vec<_>>()
                .join(":"),
        }
    }
}

/// Which conditional law a model estimates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "channel", rename_all = "kebab-case")]
pub enum ResponseChannel {
    /// `D_{k+1}` among at-risk rows, pooled over `k`.
    Event,
    /// One time-varying covariate component at `k+1`, pooled over `k`.
    Covariate { name: String },
    /// `C_{k+1}` pooled over `k` (standard ordering) or the single terminal
    /// censoring indicator among survivors (terminal ordering).
    Censoring,
    /// `Y` among uncensored survivors.
    Outcome,
}

impl ResponseChannel {
    pub fn label(&self) -> String {
        match self {
            ResponseChannel::Event => "D".to_string(),
            ResponseChannel::Covariate { name } => format!("L_{name}"),
            ResponseChannel::Censoring => "C".to_string(),
            ResponseChannel::Outcome => "Y".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    Logit,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: ResponseChannel,
    pub terms: Vec<Term>,
    pub link: Link,
    pub stratify_by_arm: bool,
}

impl ModelSpec {
    /// Binary responses take the logit link, the outcome the identity link.
    pub fn check(&self) -> Result<(), FitError> {
        let want = match self.response {
            ResponseChannel::Outcome => Link::Identity,
            _ => Link::Logit,
        };
        if self.link != want {
            return Err(FitError::Formula(format!(
                "response {} requires {:?} link",
                self.response.label(),
                want
            )));
        }
        if self.terms.is_empty() {
            return Err(FitError::Formula("model needs at least one term".into()));
        }
        Ok(())
    }
}

/// One pooled design row: a record at one interval.
#[derive(Debug, Clone, Copy)]
pub struct RiskRow {
    pub rec: usize,
    pub k: usize,
    pub response: f64,
}

/// Risk-set construction per channel.
///
/// Event at `k+1`: event-free at `k` and uncensored through the interval
/// (`C_{k+1} = 0` under the standard ordering, where censoring precedes the
/// event). Censoring at `k+1`: event-free at `k`, uncensored at `k`; under
/// the terminal ordering a single row per survivor. Covariates at `k+1`:
/// event-free and uncensored at `k+1`. Outcome: uncensored survivors.
pub fn risk_rows(ds: &TrialDataset, channel: &ResponseChannel) -> Vec<RiskRow> {
    let kk = ds.grid.k;
    let terminal = ds.grid.ordering == OrderingVariant::TerminalDBeforeC;
    let mut rows = Vec::new();
    match channel {
        ResponseChannel::Event => {
            for (i, r) in ds.records.iter().enumerate() {
                for k in 0..=kk {
                    let uncensored = if terminal {
                        true
                    } else {
                        r.censored_by(k + 1) == 0
                    };
                    if r.event_by(k) == 0 && uncensored {
                        rows.push(RiskRow {
                            rec: i,
                            k,
                            response: r.events[k] as f64,
                        });
                    }
                }
            }
        }
        ResponseChannel::Censoring => {
            for (i, r) in ds.records.iter().enumerate() {
                if terminal {
                    if r.survived() {
                        rows.push(RiskRow {
                            rec: i,
                            k: kk,
                            response: r.censoring[kk] as f64,
                        });
                    }
                } else {
                    for k in 0..=kk {
                        if r.event_by(k) == 0 && r.censored_by(k) == 0 {
                            rows.push(RiskRow {
                                rec: i,
                                k,
                                response: r.censoring[k] as f64,
                            });
                        }
                    }
                }
            }
        }
        ResponseChannel::Covariate { name } => {
            let c = tv_index(ds, name);
            for (i, r) in ds.records.iter().enumerate() {
                for k in 0..kk {
                    if r.event_by(k + 1) == 0 && r.censored_by(k + 1) == 0 {
                        if let Some(l) = &r.covariates[k] {
                            rows.push(RiskRow {
                                rec: i,
                                k,
                                response: l[c],
                            });
                        }
                    }
                }
            }
        }
        ResponseChannel::Outcome => {
            for (i, r) in ds.records.iter().enumerate() {
                if let Some(y) = r.outcome {
                    rows.push(RiskRow {
                        rec: i,
                        k: kk,
                        response: y,
                    });
                }
            }
        }
    }
    rows
}

pub(crate) fn tv_index(ds: &TrialDataset, name: &str) -> usize {
    ds.tv_names
        .iter()
        .position(|n| n == name)
        .unwrap_or_else(|| panic!("unknown time-varying covariate `{name}`"))
}

pub(crate) fn baseline_index(ds: &TrialDataset, name: &str) -> Option<usize> {
    ds.baseline_names.iter().position(|n| n == name)
}

/// Value of one term for a record at interval `k`. `arm_override` replaces
/// the record's own treatment value when predicting at a counterfactual arm.
pub fn term_value(
    ds: &TrialDataset,
    rec: &LongitudinalRecord,
    k: usize,
    arm_override: Option<u8>,
    term: &Term,
) -> Result<f64, FitError> {
    match term {
        Term::Intercept => Ok(1.0),
        Term::Arm => match arm_override {
            Some(a) => Ok(a as f64),
            None => rec
                .arm
                .two_arm()
                .map(|a| a as f64)
                .ok_or(FitError::MissingPredictor {
                    term: "A".to_string(),
                }),
        },
        Term::TimeIndex => Ok(k as f64),
        Term::Baseline(name) => {
            let idx = baseline_index(ds, name).ok_or_else(|| FitError::MissingPredictor {
                term: term.label(),
            })?;
            Ok(rec.baseline[idx])
        }
        Term::Lagged(name) => {
            let idx = ds
                .tv_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| FitError::MissingPredictor {
                    term: term.label(),
                })?;
            Ok(rec.covariate_carried(k, idx).unwrap_or(0.0))
        }
        Term::Interaction(ts) => {
            let mut v = 1.0;
            for t in ts {
                v *= term_value(ds, rec, k, arm_override, t)?;
            }
            Ok(v)
        }
    }
}

/// Builds the design row for a record at interval `k`.
pub fn design_row(
    ds: &TrialDataset,
    rec: &LongitudinalRecord,
    k: usize,
    arm_override: Option<u8>,
    terms: &[Term],
) -> Result<Vec<f64>, FitError> {
    terms
        .iter()
        .map(|t| term_value(ds, rec, k, arm_override, t))
        .collect()
}
