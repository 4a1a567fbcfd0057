//! Newton–Raphson maximum likelihood for logistic models and least squares
//! for the identity link, with safeguards: step-halving on likelihood
//! decrease, rank-deficiency detection through pivoted Cholesky, and a
//! separation check on standardized coefficients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::FitError;
use crate::util::expit;

use super::design::{design_row, risk_rows, Link, ModelSpec, Term};

pub const SCORE_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100;
pub const SEPARATION_LIMIT: f64 = 30.0;

/// A fitted GLM for one channel (one arm stratum when stratified).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFit {
    pub spec: ModelSpec,
    /// Stratum this fit belongs to, when the spec is arm-stratified.
    pub arm: Option<u8>,
    pub term_labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub n_used: usize,
}

impl NuisanceFit {
    /// Linear predictor passed through the link inverse; logit-link values
    /// stay strictly inside (0, 1).
    pub fn predict_x(&self, x: &[f64]) -> f64 {
        let eta: f64 = self
            .coefficients
            .iter()
            .zip(x)
            .map(|(b, v)| b * v)
            .sum();
        match self.spec.link {
            Link::Logit => expit(eta),
            Link::Identity => eta,
        }
    }

    /// Prediction from named term values (`"1"` is implicit). Interactions
    /// are computed from their base terms.
    pub fn predict_named(&self, values: &BTreeMap<String, f64>) -> Result<f64, FitError> {
        fn value_of(term: &Term, values: &BTreeMap<String, f64>) -> Result<f64, FitError> {
            match term {
                Term::Intercept => Ok(1.0),
                Term::Interaction(ts) => {
                    let mut v = 1.0;
                    for t in ts {
                        v *= value_of(t, values)?;
                    }
                    Ok(v)
                }
                other => values
                    .get(&other.label())
                    .copied()
                    .ok_or_else(|| FitError::MissingPredictor {
                        term: other.label(),
                    }),
            }
        }
        let x: Vec<f64> = self
            .spec
            .terms
            .iter()
            .map(|t| value_of(t, values))
            .collect::<Result<_, _>>()?;
        Ok(self.predict_x(&x))
    }
}

/// Fits one model on its risk set. Stratified specs are fitted by
/// [`fit_glm_stratified`]; this function uses all risk rows.
pub fn fit_glm(ds: &TrialDataset, spec: &ModelSpec) -> Result<NuisanceFit, FitError> {
    fit_glm_filtered(ds, spec, None)
}

/// Fits one stratum (`arm`) of an arm-stratified model.
pub fn fit_glm_stratified(
    ds: &TrialDataset,
    spec: &ModelSpec,
    arm: u8,
) -> Result<NuisanceFit, FitError> {
    fit_glm_filtered(ds, spec, Some(arm))
}

fn fit_glm_filtered(
    ds: &TrialDataset,
    spec: &ModelSpec,
    arm: Option<u8>,
) -> Result<NuisanceFit, FitError> {
    spec.check()?;
    let rows = risk_rows(ds, &spec.response);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in &rows {
        let rec = &ds.records[row.rec];
        if let Some(a) = arm {
            if rec.arm.two_arm() != Some(a) {
                continue;
            }
        }
        x.push(design_row(ds, rec, row.k, None, &spec.terms)?);
        y.push(row.response);
    }
    if x.is_empty() {
        return Err(FitError::NoRiskSet {
            channel: spec.response.label(),
        });
    }
    let term_labels: Vec<String> = spec.terms.iter().map(Term::label).collect();
    let (coefficients, converged, iterations, loglik) = match spec.link {
        Link::Logit => fit_logit(&x, &y, &term_labels)?,
        Link::Identity => fit_ols(&x, &y)?,
    };
    Ok(NuisanceFit {
        spec: spec.clone(),
        arm,
        term_labels,
        coefficients,
        converged,
        iterations,
        loglik,
        n_used: y.len(),
    })
}

fn column_sds(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len() as f64;
    let p = x[0].len();
    (0..p)
        .map(|j| {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect()
}

fn check_rank(x: &[Vec<f64>]) -> Result<(), FitError> {
    let p = x[0].len();
    let mut gram = vec![vec![0.0; p]; p];
    for row in x {
        for i in 0..p {
            for j in i..p {
                gram[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
    }
    cholesky_solve(&gram, &vec![0.0; p])
        .map(|_| ())
        .map_err(|column| FitError::RankDeficient { column })
}

fn loglik_bernoulli(x: &[Vec<f64>], y: &[f64], beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let mu = expit(row.iter().zip(beta).map(|(v, b)| v * b).sum());
        ll += yi * mu.ln() + (1.0 - yi) * (1.0 - mu).ln();
    }
    ll
}

fn fit_logit(
    x: &[Vec<f64>],
    y: &[f64],
    term_labels: &[String],
) -> Result<(Vec<f64>, bool, usize, f64), FitError> {
    check_rank(x)?;
    let p = x[0].len();
    let sds = column_sds(x);
    let mut beta = vec![0.0; p];
    let mut ll = loglik_bernoulli(x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=MAX_ITER {
        iterations = iter;
        let mut score = vec![0.0; p];
        let mut info = vec![vec![0.0; p]; p];
        for (row, &yi) in x.iter().zip(y) {
            let mu = expit(row.iter().zip(&beta).map(|(v, b)| v * b).sum());
            let w = (mu * (1.0 - mu)).max(1e-12);
            for i in 0..p {
                score[i] += (yi - mu) * row[i];
                for j in i..p {
                    info[i][j] += w * row[i] * row[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                info[i][j] = info[j][i];
            }
        }
        if score.iter().all(|s| s.abs() < SCORE_TOL) {
            converged = true;
            break;
        }
        let delta =
            cholesky_solve(&info, &score).map_err(|column| FitError::RankDeficient { column })?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = beta
                .iter()
                .zip(&delta)
                .map(|(b, d)| b + step * d)
                .collect();
            let trial_ll = loglik_bernoulli(x, y, &trial);
            if trial_ll >= ll - 1e-12 {
                beta = trial;
                ll = trial_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        check_separation(&beta, &sds, term_labels)?;
    }
    Ok((beta, converged, iterations, ll))
}

fn check_separation(beta: &[f64], sds: &[f64], labels: &[String]) -> Result<(), FitError> {
    for ((b, sd), label) in beta.iter().zip(sds).zip(labels) {
        let scale = if *sd > 0.0 { *sd } else { 1.0 };
        if (b * scale).abs() > SEPARATION_LIMIT {
            return Err(FitError::Separation {
                term: label.clone(),
                limit: SEPARATION_LIMIT,
            });
        }
    }
    Ok(())
}

fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, bool, usize, f64), FitError> {
    let p = x[0].len();
    let n = x.len();
    let mut gram = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in i..p {
                gram[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
    }
    let beta =
        cholesky_solve(&gram, &xty).map_err(|column| FitError::RankDeficient { column })?;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(v, b)| v * b).sum();
            (yi - fit) * (yi - fit)
        })
        .sum();
    let sigma2 = (rss / n as f64).max(1e-300);
    let loglik = -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    Ok((beta, true, 1, loglik))
}

/// Solves `A x = b` for symmetric positive definite `A`; returns the index
/// of the first non-positive pivot on failure.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, usize> {
    let p = a.len();
    let mut l = vec![vec![0.0; p]; p];
    for j in 0..p {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        let tol = 1e-10 * a[j][j].abs().max(1.0);
        if d <= tol {
            return Err(j);
        }
        l[j][j] = d.sqrt();
        for i in (j + 1)..p {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    // forward then back substitution
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * z[k];
        }
        z[i] = s / l[i][i];
    }
    let mut xsol = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in (i + 1)..p {
            s -= l[k][i] * xsol[k];
        }
        xsol[i] = s / l[i][i];
    }
    Ok(xsol)
}
