//! The two exact evaluation routes for the identified conditional mean on a
//! discrete law.
//!
//! Route one iterates the conditional factorization directly: outcome means
//! weighted by products of event-survival terms evaluated at the
//! event-pathway arm, outcome-block densities at the outcome-pathway arm,
//! and event-block densities at the event-pathway arm. Route two computes
//! the same value as a ratio of weighted expectations over the observed law
//! of the outcome-pathway arm, with censoring, event, and event-block
//! density weights. The two are algebraically equivalent; keeping both as
//! separate code paths gives the test suite a dual route to cross-check.

use crate::error::IdentError;
use crate::util::KahanSum;

use super::{describe_cell, DiscreteLaw, POSITIVITY_MIN};

/// Outcome of fetching a probability cell: prune the branch on a structural
/// zero, fail on undefined or sub-threshold cells.
fn fetch(p: f64, cell: impl Fn() -> String) -> Result<Option<f64>, IdentError> {
    if p == 0.0 {
        return Ok(None);
    }
    if !p.is_finite() || p < POSITIVITY_MIN {
        return Err(IdentError::PositivityViolation { cell: cell() });
    }
    Ok(Some(p))
}

fn fetch_mean(m: f64, cell: impl Fn() -> String) -> Result<f64, IdentError> {
    if !m.is_finite() {
        return Err(IdentError::PositivityViolation { cell: cell() });
    }
    Ok(m)
}

/// Exact evaluation of the iterated-conditional identification formula.
///
/// Histories are enumerated in lexicographic time order, accumulating
/// log-space products that are exponentiated per history into
/// Kahan-compensated numerator and denominator sums.
pub fn gformula_exact(law: &DiscreteLaw, a_y: u8, a_d: u8) -> Result<f64, IdentError> {
    law.check_size()?;
    let kk = law.grid.k;
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();

    // Depth-first over (time, history); `logp` carries the running product.
    let mut stack: Vec<(usize, usize, f64)> = Vec::new();
    for cell in 0..law.n_l0_states() {
        let mass = law.l0_pmf[cell];
        if mass == 0.0 {
            continue;
        }
        if !mass.is_finite() {
            return Err(IdentError::PositivityViolation {
                cell: format!("L0 pmf[cell={cell}]"),
            });
        }
        stack.push((0, cell, mass.ln()));
    }

    while let Some((t, hist, logp)) = stack.pop() {
        // Survival of D_{t+1} at the event-pathway arm.
        let e = law.event_prob(t, hist, a_d);
        let surv = match fetch(1.0 - e, || describe_cell("D-survival", t, hist, a_d))? {
            Some(p) => p,
            None => continue,
        };
        let logp = logp + surv.ln();
        if t == kk {
            let ey = fetch_mean(law.outcome_mean(hist, a_y), || {
                describe_cell("E[Y]", kk, hist, a_y)
            })?;
            let p = logp.exp();
            num.add(p * ey);
            den.add(p);
            continue;
        }
        'state: for tv_state in 0..law.n_tv_states() {
            let values = law.tv_values(tv_state);
            let ad_state = law.ad_state_of_tv(tv_state);
            let mut logf = 0.0;
            for &c in &law.ad_components() {
                let vi = value_index(law, c, values[c]);
                let p = law.density_prob(t, c, hist, 0, a_d, vi);
                match fetch(p, || describe_cell(&format!("L-density[{c}]"), t, hist, a_d))? {
                    Some(p) => logf += p.ln(),
                    None => continue 'state,
                }
            }
            for &c in &law.ay_components() {
                let vi = value_index(law, c, values[c]);
                let p = law.density_prob(t, c, hist, ad_state, a_y, vi);
                match fetch(p, || describe_cell(&format!("L-density[{c}]"), t, hist, a_y))? {
                    Some(p) => logf += p.ln(),
                    None => continue 'state,
                }
            }
            stack.push((t + 1, law.extend_history(hist, tv_state), logp + logf));
        }
    }

    ratio(num.value(), den.value())
}

/// Exact evaluation of the weighted representation: a ratio of weighted
/// expectations over the observed law conditional on the outcome-pathway
/// arm. The weights are the inverse censoring product, the event-survival
/// ratio, the event-block density ratio, and (off marginal randomization)
/// the baseline assignment ratio that generalizes the representation to
/// covariate-dependent treatment probabilities.
pub fn weighted_repr_exact(law: &DiscreteLaw, a_y: u8, a_d: u8) -> Result<f64, IdentError> {
    law.check_size()?;
    let kk = law.grid.k;
    let p_arm = law.treat_marginal(a_y);
    if !(p_arm > POSITIVITY_MIN) {
        return Err(IdentError::PositivityViolation {
            cell: format!("Pr(A={a_y})"),
        });
    }
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();

    // (time, history, observed mass given arm a_y, weight)
    let mut stack: Vec<(usize, usize, f64, f64)> = Vec::new();
    for cell in 0..law.n_l0_states() {
        let mass = law.l0_pmf[cell];
        if mass == 0.0 {
            continue;
        }
        let p1 = law.treat[cell];
        let pa = if a_y == 1 { p1 } else { 1.0 - p1 };
        if !pa.is_finite() || pa < POSITIVITY_MIN {
            return Err(IdentError::PositivityViolation {
                cell: format!("Pr(A={a_y} | L0 cell={cell})"),
            });
        }
        let obs = mass * pa / p_arm;
        let w0 = p_arm / pa;
        stack.push((0, cell, obs, w0));
    }

    while let Some((t, hist, obs, w)) = stack.pop() {
        // Censoring survival at the factual arm, cancelled by the censoring
        // weight's denominator.
        let (obs, w) = if law.interim_censor.is_some() {
            let pc = law.interim_censor_prob(t, hist, a_y);
            match fetch(1.0 - pc, || describe_cell("C-survival", t, hist, a_y))? {
                Some(sc) => (obs * sc, w / sc),
                None => continue,
            }
        } else {
            (obs, w)
        };
        let sd_ay = match fetch(1.0 - law.event_prob(t, hist, a_y), || {
            describe_cell("D-survival", t, hist, a_y)
        })? {
            Some(p) => p,
            None => continue,
        };
        let sd_ad = match fetch(1.0 - law.event_prob(t, hist, a_d), || {
            describe_cell("D-survival", t, hist, a_d)
        })? {
            Some(p) => p,
            None => continue,
        };
        let obs = obs * sd_ay;
        let w = w * sd_ad / sd_ay;
        if t == kk {
            let (obs, w) = if law.terminal_censor.is_some() {
                let pc = law.terminal_censor_prob(hist, a_y);
                match fetch(1.0 - pc, || describe_cell("C-terminal", kk, hist, a_y))? {
                    Some(sc) => (obs * sc, w / sc),
                    None => continue,
                }
            } else {
                (obs, w)
            };
            let ey = fetch_mean(law.outcome_mean(hist, a_y), || {
                describe_cell("E[Y]", kk, hist, a_y)
            })?;
            num.add(obs * w * ey);
            den.add(obs * w);
            continue;
        }
        'state: for tv_state in 0..law.n_tv_states() {
            let values = law.tv_values(tv_state);
            let ad_state = law.ad_state_of_tv(tv_state);
            let mut obs_f = 1.0;
            let mut w_f = 1.0;
            for &c in &law.ad_components() {
                let vi = value_index(law, c, values[c]);
                let p_ay = law.density_prob(t, c, hist, 0, a_y, vi);
                let p_ad = law.density_prob(t, c, hist, 0, a_d, vi);
                let p_ay =
                    match fetch(p_ay, || describe_cell(&format!("L-density[{c}]"), t, hist, a_y))? {
                        Some(p) => p,
                        None => continue 'state,
                    };
                let p_ad =
                    match fetch(p_ad, || describe_cell(&format!("L-density[{c}]"), t, hist, a_d))? {
                        Some(p) => p,
                        None => continue 'state,
                    };
                obs_f *= p_ay;
                w_f *= p_ad / p_ay;
            }
            for &c in &law.ay_components() {
                let vi = value_index(law, c, values[c]);
                let p = law.density_prob(t, c, hist, ad_state, a_y, vi);
                match fetch(p, || describe_cell(&format!("L-density[{c}]"), t, hist, a_y))? {
                    Some(p) => obs_f *= p,
                    None => continue 'state,
                }
            }
            stack.push((
                t + 1,
                law.extend_history(hist, tv_state),
                obs * obs_f,
                w * w_f,
            ));
        }
    }

    ratio(num.value(), den.value())
}

fn value_index(law: &DiscreteLaw, c: usize, value: f64) -> usize {
    law.tv_support[c]
        .iter()
        .position(|&s| s == value)
        .expect("value in support")
}

fn ratio(num: f64, den: f64) -> Result<f64, IdentError> {
    if den <= 0.0 || !den.is_finite() {
        return Err(IdentError::PositivityViolation {
            cell: "denominator: no surviving history has positive mass".to_string(),
        });
    }
    Ok(num / den)
}
