//! Falsification and audit procedures: positivity checks on observed data,
//! outcome-pathway isolation tests on four-arm data, and
//! modified-treatment consistency tests on six-arm data.
//!
//! The falsification logic compares arm means of quantities the structural
//! assumptions force to be equal; the test statistics themselves are
//! conventional two-sample z-tests with Bonferroni control across strata.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::data::{ArmAssignment, DesignKind, TrialDataset};
use crate::error::DiagError;
use crate::util::normal_cdf;

const MIN_STRATUM: usize = 10;

/// Counts of each arm among at-risk rows of one covariate-history cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityCell {
    pub k: usize,
    /// Rendered history values `(l0, l_1..l_k)`.
    pub history: String,
    pub n_arm0: usize,
    pub n_arm1: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStat {
    pub label: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub check: String,
    pub cells: Vec<PositivityCell>,
    pub tests: Vec<TestStat>,
    pub alpha: Option<f64>,
    /// Bonferroni-adjusted overall verdict, when tests were run.
    pub reject: Option<bool>,
}

impl DiagnosticReport {
    pub fn flagged_cells(&self) -> Vec<&PositivityCell> {
        self.cells.iter().filter(|c| c.flagged).collect()
    }

    /// Plain-text table rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("check: {}\n", self.check));
        if !self.cells.is_empty() {
            out.push_str(&format!(
                "{:<4} {:<28} {:>8} {:>8} {:>8}\n",
                "k", "history", "n(A=0)", "n(A=1)", "flag"
            ));
            for c in &self.cells {
                out.push_str(&format!(
                    "{:<4} {:<28} {:>8} {:>8} {:>8}\n",
                    c.k,
                    c.history,
                    c.n_arm0,
                    c.n_arm1,
                    if c.flagged { "ZERO" } else { "" }
                ));
            }
        }
        if !self.tests.is_empty() {
            out.push_str(&format!(
                "{:<28} {:>10} {:>12}\n",
                "test", "z", "p-value"
            ));
            for t in &self.tests {
                out.push_str(&format!(
                    "{:<28} {:>10.4} {:>12.6}\n",
                    t.label, t.statistic, t.p_value
                ));
            }
        }
        if let (Some(alpha), Some(reject)) = (self.alpha, self.reject) {
            out.push_str(&format!(
                "overall (Bonferroni, alpha={alpha}): {}\n",
                if reject { "REJECT" } else { "no rejection" }
            ));
        }
        out
    }
}

fn render_history(l0: &[f64], tv: &[Vec<f64>]) -> String {
    let mut parts: Vec<String> = vec![format!(
        "l0=({})",
        l0.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
    )];
    for (i, l) in tv.iter().enumerate() {
        parts.push(format!(
            "l{}=({})",
            i + 1,
            l.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
        ));
    }
    parts.join(" ")
}

/// Per-time, per-history arm counts among event-free uncensored rows; flags
/// any cell one arm never reaches. Those are exactly the cells that break
/// the empirical identification tables.
pub fn check_positivity(ds: &TrialDataset) -> DiagnosticReport {
    let mut cells = Vec::new();
    for k in 0..=ds.grid.k {
        // at risk entering interval k
        let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for r in &ds.records {
            if r.event_by(k) != 0 || r.censored_by(k) != 0 {
                continue;
            }
            let a = match r.arm.two_arm() {
                Some(a) => a,
                None => continue,
            };
            let tv: Vec<Vec<f64>> = (0..k)
                .map(|t| r.covariates[t].clone().unwrap_or_default())
                .collect();
            let key = render_history(&r.baseline, &tv);
            let entry = counts.entry(key).or_insert((0, 0));
            if a == 0 {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
        for (history, (n0, n1)) in counts {
            cells.push(PositivityCell {
                k,
                history,
                n_arm0: n0,
                n_arm1: n1,
                flagged: n0 == 0 || n1 == 0,
            });
        }
    }
    DiagnosticReport {
        check: "positivity".to_string(),
        cells,
        tests: Vec::new(),
        alpha: None,
        reject: None,
    }
}

/// Pooled two-proportion z-test; degenerate comparisons (equal proportions,
/// or no variance) give p = 1.
fn two_proportion_test(x1: f64, n1: f64, x0: f64, n0: f64) -> (f64, f64) {
    let p1 = x1 / n1;
    let p0 = x0 / n0;
    if (p1 - p0).abs() == 0.0 {
        return (0.0, 1.0);
    }
    let pooled = (x1 + x0) / (n1 + n0);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n0)).sqrt();
    if se == 0.0 {
        return (0.0, 1.0);
    }
    let z = (p1 - p0) / se;
    (z, 2.0 * (1.0 - normal_cdf(z.abs())))
}

/// Welch two-sample z-test for means.
fn welch_test(mean1: f64, var1: f64, n1: f64, mean0: f64, var0: f64, n0: f64) -> (f64, f64) {
    if (mean1 - mean0).abs() == 0.0 {
        return (0.0, 1.0);
    }
    let se = (var1 / n1 + var0 / n0).sqrt();
    if se == 0.0 {
        return (0.0, 1.0);
    }
    let z = (mean1 - mean0) / se;
    (z, 2.0 * (1.0 - normal_cdf(z.abs())))
}

struct GroupStats {
    n: usize,
    sum: f64,
    sumsq: f64,
}

impl GroupStats {
    fn new() -> Self {
        Self {
            n: 0,
            sum: 0.0,
            sumsq: 0.0,
        }
    }
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
    fn var(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.sumsq - self.sum * self.sum / self.n as f64) / (self.n as f64 - 1.0)
    }
}

/// Falsification test for outcome-pathway isolation on a four-arm trial:
/// within each event-pathway stratum, the event risk at every time must not
/// depend on the outcome-pathway assignment. Event risks are compared on
/// the at-risk sets (event-free, uncensored), mirroring the hazard
/// factorization.
pub fn falsify_ay_isolation(ds: &TrialDataset, alpha: f64) -> Result<DiagnosticReport, DiagError> {
    if ds.design() != DesignKind::FourArm {
        return Err(DiagError::WrongDesign {
            expected: "four-arm",
        });
    }
    let mut tests = Vec::new();
    for k in 0..=ds.grid.k {
        for a_d in 0..=1u8 {
            // events[k] among at-risk rows per a_y
            let mut x = [0.0f64; 2];
            let mut n = [0.0f64; 2];
            for r in &ds.records {
                let (ry, rd) = match r.arm {
                    ArmAssignment::FourArm { a_y, a_d } => (a_y, a_d),
                    ArmAssignment::TwoArm { .. } => continue,
                };
                if rd != a_d {
                    continue;
                }
                if r.event_by(k) != 0 || r.censored_by(k + 1) != 0 {
                    continue;
                }
                n[ry as usize] += 1.0;
                x[ry as usize] += r.events[k] as f64;
            }
            for (a_y, count) in n.iter().enumerate() {
                if (*count as usize) < MIN_STRATUM {
                    return Err(DiagError::InsufficientData {
                        stratum: format!("(k={k}, a_D={a_d}, a_Y={a_y})"),
                        count: *count as usize,
                        min: MIN_STRATUM,
                    });
                }
            }
            let (z, p) = two_proportion_test(x[1], n[1], x[0], n[0]);
            tests.push(TestStat {
                label: format!("D_{} | a_D={a_d}: a_Y=1 vs 0", k + 1),
                statistic: z,
                p_value: p,
            });
        }
    }
    let m = tests.len() as f64;
    let reject = tests.iter().any(|t| t.p_value < alpha / m);
    Ok(DiagnosticReport {
        check: "ay-isolation".to_string(),
        cells: Vec::new(),
        tests,
        alpha: Some(alpha),
        reject: Some(reject),
    })
}

/// Falsification test for the modified treatment assumption on a six-arm
/// trial: for each `a`, the joint arm `(a_Y = a, a_D = a)` must match the
/// original arm `A = a` on the event risks at every time (at-risk sets) and
/// on the outcome among uncensored survivors.
pub fn falsify_modified_treatment(
    ds: &TrialDataset,
    alpha: f64,
) -> Result<DiagnosticReport, DiagError> {
    if ds.design() != DesignKind::SixArm {
        return Err(DiagError::WrongDesign { expected: "six-arm" });
    }
    let mut tests = Vec::new();
    for a in 0..=1u8 {
        let in_joint = |r: &ArmAssignment| matches!(*r, ArmAssignment::FourArm { a_y, a_d } if a_y == a && a_d == a);
        let in_orig = |r: &ArmAssignment| matches!(*r, ArmAssignment::TwoArm { a: ra } if ra == a);
        for k in 0..=ds.grid.k {
            let mut x = [0.0f64; 2];
            let mut n = [0.0f64; 2];
            for r in &ds.records {
                let group = if in_joint(&r.arm) {
                    1
                } else if in_orig(&r.arm) {
                    0
                } else {
                    continue;
                };
                if r.event_by(k) != 0 || r.censored_by(k + 1) != 0 {
                    continue;
                }
                n[group] += 1.0;
                x[group] += r.events[k] as f64;
            }
            for (g, count) in n.iter().enumerate() {
                if (*count as usize) < MIN_STRATUM {
                    return Err(DiagError::InsufficientData {
                        stratum: format!("(V=D_{}, a={a}, group={g})", k + 1),
                        count: *count as usize,
                        min: MIN_STRATUM,
                    });
                }
            }
            let (z, p) = two_proportion_test(x[1], n[1], x[0], n[0]);
            tests.push(TestStat {
                label: format!("D_{} | (a_Y=a_D={a}) vs A={a}", k + 1),
                statistic: z,
                p_value: p,
            });
        }
        let mut joint = GroupStats::new();
        let mut orig = GroupStats::new();
        for r in &ds.records {
            if !r.survived() || !r.uncensored() {
                continue;
            }
            let y = r.outcome.expect("uncensored survivor has outcome");
            if in_joint(&r.arm) {
                joint.push(y);
            } else if in_orig(&r.arm) {
                orig.push(y);
            }
        }
        if joint.n < MIN_STRATUM || orig.n < MIN_STRATUM {
            return Err(DiagError::InsufficientData {
                stratum: format!("(V=Y, a={a})"),
                count: joint.n.min(orig.n),
                min: MIN_STRATUM,
            });
        }
        let (z, p) = welch_test(
            joint.mean(),
            joint.var(),
            joint.n as f64,
            orig.mean(),
            orig.var(),
            orig.n as f64,
        );
        tests.push(TestStat {
            label: format!("Y | (a_Y=a_D={a}) vs A={a}"),
            statistic: z,
            p_value: p,
        });
    }
    let m = tests.len() as f64;
    let reject = tests.iter().any(|t| t.p_value < alpha / m);
    Ok(DiagnosticReport {
        check: "modified-treatment".to_string(),
        cells: Vec::new(),
        tests,
        alpha: Some(alpha),
        reject: Some(reject),
    })
}
