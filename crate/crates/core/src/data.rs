//! Domain types for longitudinal two-arm trial data with an absorbing
//! truncating event, absorbing censoring, and an outcome defined only for
//! uncensored survivors.
//!
//! Time is discrete: `k = 0..K` indexes intervals, the outcome is measured at
//! `K+1`. Within interval `k` the temporal order is `(C_{k+1}, D_{k+1},
//! L_{k+1})` under [`OrderingVariant::StandardCdl`]. The alternative order
//! [`OrderingVariant::TerminalDBeforeC`] has no interim censoring and a single
//! terminal censoring indicator drawn after `D_{K+1}`, which matches trials
//! where the only form of censoring is a missing outcome measurement among
//! survivors.

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Temporal ordering of censoring relative to the event indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingVariant {
    /// `(C_{k+1}, D_{k+1}, L_{k+1})` in every interval.
    StandardCdl,
    /// No interim censoring; `D_{K+1}` precedes the single terminal `C`.
    TerminalDBeforeC,
}

/// Discrete time grid: `K` interior intervals, outcome at `K+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Number of interior intervals `K` (>= 0).
    pub k: usize,
    pub ordering: OrderingVariant,
}

impl TimeGrid {
    pub fn new(k: usize, ordering: OrderingVariant) -> Self {
        Self { k, ordering }
    }

    /// Number of event/censoring indicators: `D_1..D_{K+1}`.
    pub fn n_event_times(&self) -> usize {
        self.k + 1
    }

    /// Number of time-varying covariate measurements: `L_1..L_K`.
    pub fn n_covariate_times(&self) -> usize {
        self.k
    }
}

/// Randomized arm for one record.
///
/// Two-arm records carry the original treatment `A`; four-arm records carry a
/// joint assignment of the two treatment components `(A_Y, A_D)`. A six-arm
/// dataset mixes both kinds, tagging each record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArmAssignment {
    TwoArm { a: u8 },
    FourArm { a_y: u8, a_d: u8 },
}

impl ArmAssignment {
    /// The value feeding the outcome-pathway channels.
    pub fn a_y(&self) -> u8 {
        match *self {
            ArmAssignment::TwoArm { a } => a,
            ArmAssignment::FourArm { a_y, .. } => a_y,
        }
    }

    /// The value feeding the event-pathway channels.
    pub fn a_d(&self) -> u8 {
        match *self {
            ArmAssignment::TwoArm { a } => a,
            ArmAssignment::FourArm { a_d, .. } => a_d,
        }
    }

    pub fn two_arm(&self) -> Option<u8> {
        match *self {
            ArmAssignment::TwoArm { a } => Some(a),
            ArmAssignment::FourArm { .. } => None,
        }
    }
}

/// Design of a dataset, inferred from its records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    TwoArm,
    FourArm,
    SixArm,
}

/// One individual's longitudinal history.
///
/// Vectors are indexed by interval: `events[i] = D_{i+1}`, `censoring[i] =
/// C_{i+1}` for `i in 0..=K`, and `covariates[i] = L_{i+1}` for `i in 0..K`.
/// A missing covariate vector or outcome is `None`; missingness is semantic
/// (undefined after the truncating event), never a numeric placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalRecord {
    pub id: String,
    /// Baseline covariates `L_0`.
    pub baseline: Vec<f64>,
    pub arm: ArmAssignment,
    /// Event indicators `D_1..D_{K+1}`.
    pub events: Vec<u8>,
    /// Time-varying covariates `L_1..L_K`; `None` once truncated or censored.
    pub covariates: Vec<Option<Vec<f64>>>,
    /// Censoring indicators `C_1..C_{K+1}`.
    pub censoring: Vec<u8>,
    /// Outcome `Y`, present iff `D_{K+1} = 0` and `C_{K+1} = 0`.
    pub outcome: Option<f64>,
}

impl LongitudinalRecord {
    /// `D_{k}` for `k in 0..=K+1`, with `D_0 = 0` by convention.
    pub fn event_by(&self, k: usize) -> u8 {
        if k == 0 {
            0
        } else {
            self.events[k - 1]
        }
    }

    /// `C_{k}` for `k in 0..=K+1`, with `C_0 = 0` by convention.
    pub fn censored_by(&self, k: usize) -> u8 {
        if k == 0 {
            0
        } else {
            self.censoring[k - 1]
        }
    }

    /// Event-free at the end of follow-up.
    pub fn survived(&self) -> bool {
        *self.events.last().expect("events nonempty") == 0
    }

    /// Uncensored through the end of follow-up.
    pub fn uncensored(&self) -> bool {
        *self.censoring.last().expect("censoring nonempty") == 0
    }

    /// Value of time-varying covariate component `c` at time `t` (1-based),
    /// carried forward from the last observed measurement when missing.
    /// `t = 0` and records with no observed measurement yet return `None`.
    pub fn covariate_carried(&self, t: usize, c: usize) -> Option<f64> {
        for back in (0..t).rev() {
            if let Some(l) = &self.covariates[back] {
                return Some(l[c]);
            }
        }
        None
    }
}

/// Per-time split of the time-varying covariates into the outcome-pathway
/// block and the event-pathway block. The blocks are disjoint and together
/// cover all time-varying covariate names; the default puts every covariate
/// in the outcome-pathway block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariatePartition {
    pub ay_block: Vec<String>,
    pub ad_block: Vec<String>,
}

impl CovariatePartition {
    pub fn default_for(tv_names: &[String]) -> Self {
        Self {
            ay_block: tv_names.to_vec(),
            ad_block: Vec::new(),
        }
    }

    pub fn all_ad(tv_names: &[String]) -> Self {
        Self {
            ay_block: Vec::new(),
            ad_block: tv_names.to_vec(),
        }
    }

    pub fn is_ad(&self, name: &str) -> bool {
        self.ad_block.iter().any(|n| n == name)
    }
}

/// A column-validated collection of records sharing one grid and schema.
///
/// Immutable after construction; all operations are pure, so a dataset can be
/// shared freely across parallel workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub grid: TimeGrid,
    pub records: Vec<LongitudinalRecord>,
    pub baseline_names: Vec<String>,
    pub tv_names: Vec<String>,
    pub partition: CovariatePartition,
}

/// One broken invariant, as data rather than an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Record id, or `None` for dataset-level problems.
    pub record_id: Option<String>,
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn record(id: &str, field: &str, rule: &str) -> Self {
        Self {
            record_id: Some(id.to_string()),
            field: field.to_string(),
            rule: rule.to_string(),
        }
    }

    fn dataset(field: &str, rule: &str) -> Self {
        Self {
            record_id: None,
            field: field.to_string(),
            rule: rule.to_string(),
        }
    }
}

impl TrialDataset {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// AD-block component indices into `tv_names`.
    pub fn ad_component_indices(&self) -> Vec<usize> {
        self.tv_names
            .iter()
            .enumerate()
            .filter(|(_, n)| self.partition.is_ad(n))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn design(&self) -> DesignKind {
        let mut has_two = false;
        let mut has_four = false;
        for r in &self.records {
            match r.arm {
                ArmAssignment::TwoArm { .. } => has_two = true,
                ArmAssignment::FourArm { .. } => has_four = true,
            }
        }
        match (has_two, has_four) {
            (true, true) => DesignKind::SixArm,
            (false, true) => DesignKind::FourArm,
            _ => DesignKind::TwoArm,
        }
    }

    pub fn has_censoring(&self) -> bool {
        self.records.iter().any(|r| !r.uncensored())
    }
}

/// Checks every record against the schema invariants. Returns an empty list
/// iff the dataset is fully consistent; each violation names the record,
/// field, and rule broken.
pub fn validate_dataset(ds: &TrialDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = ds.grid.k;
    if !partition_is_valid(&ds.partition, &ds.tv_names) {
        out.push(Violation::dataset(
            "partition",
            "partition blocks must be disjoint and cover all time-varying covariates",
        ));
    }

    let mut seen_ids = std::collections::HashSet::new();
    for r in &ds.records {
        if !seen_ids.insert(r.id.as_str()) {
            out.push(Violation::record(&r.id, "id", "id must be unique"));
        }
        if r.baseline.len() != ds.baseline_names.len() {
            out.push(Violation::record(
                &r.id,
                "L0",
                "baseline dimension must match dataset schema",
            ));
        }
        if r.events.len() != k + 1 || r.censoring.len() != k + 1 || r.covariates.len() != k {
            out.push(Violation::record(
                &r.id,
                "grid",
                "record length must match the time grid",
            ));
            continue;
        }
        for t in 0..k {
            if let Some(l) = &r.covariates[t] {
                if l.len() != ds.tv_names.len() {
                    out.push(Violation::record(
                        &r.id,
                        "L",
                        "time-varying covariate dimension must match dataset schema",
                    ));
                }
            }
        }
        for t in 1..=k {
            if r.events[t - 1] == 1 && r.events[t] == 0 {
                out.push(Violation::record(&r.id, "D", "D not absorbing"));
            }
            if r.censoring[t - 1] == 1 && r.censoring[t] == 0 {
                out.push(Violation::record(&r.id, "C", "C not absorbing"));
            }
        }
        if ds.grid.ordering == OrderingVariant::TerminalDBeforeC {
            if r.censoring[..k].iter().any(|&c| c == 1) {
                out.push(Violation::record(
                    &r.id,
                    "C",
                    "interim censoring not allowed under terminal-D-before-C ordering",
                ));
            }
        }
        // L_j must be absent from the first truncated/censored time onward.
        // events[t-1] = D_t and covariates[t-1] = L_t, so D_t = 1 or C_t = 1
        // forces L_t, L_{t+1}, ... missing.
        let mut gone = false;
        for t in 1..=k {
            if r.events[t - 1] == 1 || r.censoring[t - 1] == 1 {
                gone = true;
            }
            if gone && r.covariates[t - 1].is_some() {
                out.push(Violation::record(
                    &r.id,
                    "L",
                    "covariates must be missing after truncation or censoring",
                ));
            }
            if !gone && r.covariates[t - 1].is_none() {
                out.push(Violation::record(
                    &r.id,
                    "L",
                    "covariates must be present while event-free and uncensored",
                ));
            }
        }
        let expect_y = r.survived() && r.uncensored();
        match (expect_y, r.outcome.is_some()) {
            (true, false) => out.push(Violation::record(&r.id, "Y", "Y must be present")),
            (false, true) => out.push(Violation::record(
                &r.id,
                "Y",
                "Y must be missing after truncation or censoring",
            )),
            _ => {}
        }
    }
    out
}

fn partition_is_valid(p: &CovariatePartition, tv: &[String]) -> bool {
    if p.ay_block.iter().any(|n| p.ad_block.contains(n)) {
        return false;
    }
    let mut union: Vec<&String> = p.ay_block.iter().chain(p.ad_block.iter()).collect();
    union.sort();
    union.dedup();
    union.len() == tv.len() && union.iter().all(|n| tv.contains(n))
}

/// Restricts a validated two-arm dataset to event-free records in arm `a`,
/// preserving order and grid.
pub fn restrict_survivors(ds: &TrialDataset, a: u8) -> Result<TrialDataset, DataError> {
    let records: Vec<LongitudinalRecord> = ds
        .records
        .iter()
        .filter(|r| r.arm.two_arm() == Some(a) && r.survived())
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(DataError::EmptySubset { arm: a });
    }
    Ok(TrialDataset {
        grid: ds.grid,
        records,
        baseline_names: ds.baseline_names.clone(),
        tv_names: ds.tv_names.clone(),
        partition: ds.partition.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> TimeGrid {
        TimeGrid::new(2, OrderingVariant::StandardCdl)
    }

    fn clean_record(id: &str, a: u8, survives: bool) -> LongitudinalRecord {
        // K = 2: D_1..D_3, L_1..L_2, C_1..C_3.
        if survives {
            LongitudinalRecord {
                id: id.to_string(),
                baseline: vec![1.0],
                arm: ArmAssignment::TwoArm { a },
                events: vec![0, 0, 0],
                covariates: vec![Some(vec![0.0]), Some(vec![1.0])],
                censoring: vec![0, 0, 0],
                outcome: Some(3.5),
            }
        } else {
            LongitudinalRecord {
                id: id.to_string(),
                baseline: vec![0.0],
                arm: ArmAssignment::TwoArm { a },
                events: vec![0, 1, 1],
                covariates: vec![Some(vec![1.0]), None],
                censoring: vec![0, 0, 0],
                outcome: None,
            }
        }
    }

    fn dataset(records: Vec<LongitudinalRecord>) -> TrialDataset {
        let tv = vec!["prog".to_string()];
        TrialDataset {
            grid: small_grid(),
            records,
            baseline_names: vec!["x".to_string()],
            tv_names: tv.clone(),
            partition: CovariatePartition::default_for(&tv),
        }
    }

    #[test]
    fn clean_small_set_validates() {
        let recs = (0..10)
            .map(|i| clean_record(&format!("r{i}"), (i % 2) as u8, i % 3 != 0))
            .collect();
        assert!(validate_dataset(&dataset(recs)).is_empty());
    }

    #[test]
    fn non_absorbing_event_flagged() {
        let mut r = clean_record("a", 1, false);
        r.events = vec![0, 1, 0];
        let v = validate_dataset(&dataset(vec![r]));
        assert!(v.iter().any(|v| v.rule == "D not absorbing"), "{v:?}");
    }

    #[test]
    fn missing_outcome_for_survivor_flagged() {
        let mut r = clean_record("a", 1, true);
        r.outcome = None;
        let v = validate_dataset(&dataset(vec![r]));
        assert!(v.iter().any(|v| v.rule == "Y must be present"), "{v:?}");
    }

    #[test]
    fn covariates_after_truncation_flagged() {
        let mut r = clean_record("a", 0, false);
        r.covariates = vec![Some(vec![1.0]), Some(vec![0.0])];
        let v = validate_dataset(&dataset(vec![r]));
        assert!(v
            .iter()
            .any(|v| v.rule.contains("missing after truncation")));
    }

    #[test]
    fn restrict_filters_and_errors_when_empty() {
        let recs = vec![
            clean_record("a", 1, true),
            clean_record("b", 1, false),
            clean_record("c", 0, true),
        ];
        let ds = dataset(recs);
        let sub = restrict_survivors(&ds, 1).unwrap();
        assert_eq!(sub.n(), 1);
        assert_eq!(sub.records[0].id, "a");

        let all_dead = dataset(vec![clean_record("a", 1, false)]);
        assert!(matches!(
            restrict_survivors(&all_dead, 1),
            Err(DataError::EmptySubset { arm: 1 })
        ));
    }

    #[test]
    fn restrict_is_idempotent_and_identity_on_pure_survivors() {
        let recs = vec![clean_record("a", 1, true), clean_record("b", 1, true)];
        let ds = dataset(recs);
        let once = restrict_survivors(&ds, 1).unwrap();
        assert_eq!(once, ds);
        let twice = restrict_survivors(&once, 1).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn carry_forward_returns_last_observed() {
        let r = clean_record("a", 0, false); // L_1 observed, L_2 missing
        assert_eq!(r.covariate_carried(2, 0), Some(1.0));
        assert_eq!(r.covariate_carried(1, 0), Some(1.0));
        assert_eq!(r.covariate_carried(0, 0), None);
    }
}
