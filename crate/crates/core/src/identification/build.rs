//! Constructors for discrete laws: analytic conversion of a structural law,
//! empirical cell-frequency tables from a dataset, and random valid laws for
//! property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{CovariatePartition, OrderingVariant, TimeGrid, TrialDataset};
use crate::error::IdentError;
use crate::sim::{partition_from_law, BaselineDist, CensoringSpec, StructuralLaw};

use super::{DensityTable, DiscreteLaw};

/// Analytically computes every conditional table of the observed two-arm law
/// implied by a structural law, by enumerating histories and evaluating the
/// structural logistic equations with both treatment components set to the
/// arm value. Requires all-binary covariates.
pub fn law_from_structural(law: &StructuralLaw) -> Result<DiscreteLaw, IdentError> {
    law.validate()
        .map_err(|e| IdentError::Unsupported(e.to_string()))?;
    if !law.all_baseline_binary() {
        return Err(IdentError::Unsupported(
            "discrete conversion requires all-binary baseline covariates".into(),
        ));
    }
    let kk = law.grid.k;
    let binary = vec![0.0, 1.0];
    let mut out = DiscreteLaw {
        grid: law.grid,
        baseline_names: law.baseline_names(),
        tv_names: law.tv_names(),
        partition: partition_from_law(law),
        baseline_support: vec![binary.clone(); law.n_baseline()],
        tv_support: vec![binary; law.n_tv()],
        l0_pmf: Vec::new(),
        treat: Vec::new(),
        event: Vec::new(),
        interim_censor: None,
        terminal_censor: None,
        density: Vec::new(),
        outcome: Vec::new(),
    };
    out.check_size()?;

    let n_l0 = out.n_l0_states();
    let n_tv = out.n_tv_states();
    for cell in 0..n_l0 {
        let l0 = out.l0_values(cell);
        let mut p = 1.0;
        for (i, b) in law.baseline.iter().enumerate() {
            let pr = match b.dist {
                BaselineDist::Bernoulli { p } => p,
                BaselineDist::Gaussian { .. } => unreachable!(),
            };
            p *= if l0[i] > 0.5 { pr } else { 1.0 - pr };
        }
        out.l0_pmf.push(p);
        out.treat.push(law.assign_prob(&l0));
    }

    // hist at time t has n_l0 * n_tv^t states; decode to (l0, most recent L).
    let tv_supports = out.tv_support.clone();
    let l0_supports = out.baseline_support.clone();
    let decode = move |hist: usize, t: usize| -> (Vec<f64>, Vec<f64>) {
        let mut h = hist;
        let mut last = Vec::new();
        for back in 0..t {
            let s = h % n_tv;
            h /= n_tv;
            if back == 0 {
                last = decode_values(&tv_supports, s);
            }
        }
        (decode_values(&l0_supports, h), last)
    };

    let interim = matches!(law.censoring, CensoringSpec::Interim { .. });
    let mut event = Vec::with_capacity(kk + 1);
    let mut censor = Vec::with_capacity(kk + 1);
    for k in 0..=kk {
        let n_hist = n_l0 * n_tv.pow(k as u32);
        let mut ev = vec![f64::NAN; n_hist * 2];
        let mut ce = vec![f64::NAN; n_hist * 2];
        for hist in 0..n_hist {
            let (l0, prev) = decode(hist, k);
            for a in 0..=1u8 {
                ev[hist * 2 + a as usize] = law.hazard(k, a, a, &l0, &prev, false);
                if interim {
                    ce[hist * 2 + a as usize] =
                        law.interim_censor_hazard(k, a, a, &l0, &prev);
                }
            }
        }
        event.push(ev);
        censor.push(ce);
    }
    out.event = event;
    if interim {
        out.interim_censor = Some(censor);
    }

    let n_ad_states = out.n_ad_states();
    let ad_comps = out.ad_components();
    let mut density = Vec::with_capacity(kk);
    for k in 0..kk {
        let n_hist = n_l0 * n_tv.pow(k as u32);
        let mut per_comp = Vec::with_capacity(law.n_tv());
        for c in 0..law.n_tv() {
            let is_ad = out.partition.is_ad(&out.tv_names[c]);
            let rows = if is_ad { n_hist * 2 } else { n_hist * n_ad_states * 2 };
            let mut probs = vec![f64::NAN; rows * 2];
            for hist in 0..n_hist {
                let (l0, prev) = decode(hist, k);
                for a in 0..=1u8 {
                    if is_ad {
                        let p = law.density(k, c, a, a, &l0, &prev, &[]);
                        let row = hist * 2 + a as usize;
                        probs[row * 2] = 1.0 - p;
                        probs[row * 2 + 1] = p;
                    } else {
                        for ad_state in 0..n_ad_states {
                            let same_ad: Vec<f64> = ad_values(&out, &ad_comps, ad_state);
                            let p = law.density(k, c, a, a, &l0, &prev, &same_ad);
                            let row = (hist * n_ad_states + ad_state) * 2 + a as usize;
                            probs[row * 2] = 1.0 - p;
                            probs[row * 2 + 1] = p;
                        }
                    }
                }
            }
            per_comp.push(DensityTable { probs });
        }
        density.push(per_comp);
    }
    out.density = density;

    let n_hist_k = n_l0 * n_tv.pow(kk as u32);
    let mut outcome = vec![f64::NAN; n_hist_k * 2];
    let mut terminal = vec![f64::NAN; n_hist_k * 2];
    for hist in 0..n_hist_k {
        let (l0, last) = decode(hist, kk);
        for a in 0..=1u8 {
            outcome[hist * 2 + a as usize] = law.outcome_mean(a, a, &l0, &last, false);
            if matches!(law.censoring, CensoringSpec::Terminal { .. }) {
                terminal[hist * 2 + a as usize] = law.terminal_censor_prob(a, a, &l0, &last);
            }
        }
    }
    out.outcome = outcome;
    if matches!(law.censoring, CensoringSpec::Terminal { .. }) {
        out.terminal_censor = Some(terminal);
    }
    Ok(out)
}

fn decode_values(supports: &[Vec<f64>], mut state: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(supports.len());
    for support in supports {
        let m = support.len();
        out.push(support[state % m]);
        state /= m;
    }
    out
}

fn ad_values(law: &DiscreteLaw, ad_comps: &[usize], mut ad_state: usize) -> Vec<f64> {
    let mut values = Vec::with_capacity(ad_comps.len());
    for &c in ad_comps {
        let m = law.tv_support[c].len();
        values.push(law.tv_support[c][ad_state % m]);
        ad_state /= m;
    }
    values
}

/// Empirical cell-frequency tables from a two-arm dataset, with the same
/// risk-set definitions used by the nuisance fits. Cells with no data are
/// NaN and surface as positivity violations when the evaluators reference
/// them. This is also the exact maximum likelihood fit of the saturated
/// nuisance models.
pub fn empirical_law(ds: &TrialDataset) -> Result<DiscreteLaw, IdentError> {
    let kk = ds.grid.k;
    let terminal_ordering = ds.grid.ordering == OrderingVariant::TerminalDBeforeC;
    let mut baseline_support: Vec<Vec<f64>> = vec![Vec::new(); ds.baseline_names.len()];
    let mut tv_support: Vec<Vec<f64>> = vec![Vec::new(); ds.tv_names.len()];
    for r in &ds.records {
        if r.arm.two_arm().is_none() {
            return Err(IdentError::Unsupported(
                "empirical law requires a two-arm dataset".into(),
            ));
        }
        for (c, &v) in r.baseline.iter().enumerate() {
            insert_sorted(&mut baseline_support[c], v);
        }
        for l in r.covariates.iter().flatten() {
            for (c, &v) in l.iter().enumerate() {
                insert_sorted(&mut tv_support[c], v);
            }
        }
    }
    let mut out = DiscreteLaw {
        grid: ds.grid,
        baseline_names: ds.baseline_names.clone(),
        tv_names: ds.tv_names.clone(),
        partition: ds.partition.clone(),
        baseline_support,
        tv_support,
        l0_pmf: Vec::new(),
        treat: Vec::new(),
        event: Vec::new(),
        interim_censor: None,
        terminal_censor: None,
        density: Vec::new(),
        outcome: Vec::new(),
    };
    out.check_size()?;

    let n_l0 = out.n_l0_states();
    let n_tv = out.n_tv_states();
    let n_ad_states = out.n_ad_states();
    let has_c = ds.has_censoring();

    let mut l0_counts = vec![0.0f64; n_l0];
    let mut treat_counts = vec![(0.0f64, 0.0f64); n_l0]; // (arm-1 count, total)
    let mut ev: Vec<(Vec<f64>, Vec<f64>)> = (0..=kk)
        .map(|k| {
            let n = n_l0 * n_tv.pow(k as u32) * 2;
            (vec![0.0; n], vec![0.0; n])
        })
        .collect();
    let mut ce = ev.clone();
    // density counts: per (k, c): counts[row * support_len + value]
    let mut dens: Vec<Vec<Vec<f64>>> = (0..kk)
        .map(|k| {
            let n_hist = n_l0 * n_tv.pow(k as u32);
            (0..ds.tv_names.len())
                .map(|c| {
                    let m = out.tv_support[c].len();
                    let rows = if out.partition.is_ad(&ds.tv_names[c]) {
                        n_hist * 2
                    } else {
                        n_hist * n_ad_states * 2
                    };
                    vec![0.0; rows * m]
                })
                .collect()
        })
        .collect();
    let n_hist_k = n_l0 * n_tv.pow(kk as u32);
    let mut y_sum = vec![0.0f64; n_hist_k * 2];
    let mut y_cnt = vec![0.0f64; n_hist_k * 2];
    let mut term_c = (vec![0.0f64; n_hist_k * 2], vec![0.0f64; n_hist_k * 2]);

    for r in &ds.records {
        let a = r.arm.two_arm().expect("two-arm checked") as usize;
        let l0_cell = out
            .l0_cell_of(&r.baseline)
            .expect("baseline values in support");
        l0_counts[l0_cell] += 1.0;
        treat_counts[l0_cell].0 += a as f64;
        treat_counts[l0_cell].1 += 1.0;

        let mut hist = l0_cell;
        for k in 0..=kk {
            // event risk set
            let at_risk_event = r.event_by(k) == 0
                && (terminal_ordering || r.censored_by(k + 1) == 0);
            if at_risk_event {
                ev[k].0[hist * 2 + a] += r.events[k] as f64;
                ev[k].1[hist * 2 + a] += 1.0;
            }
            // interim censoring risk set
            if !terminal_ordering && has_c && r.event_by(k) == 0 && r.censored_by(k) == 0 {
                ce[k].0[hist * 2 + a] += r.censoring[k] as f64;
                ce[k].1[hist * 2 + a] += 1.0;
            }
            if k < kk {
                if r.event_by(k + 1) == 0 && r.censored_by(k + 1) == 0 {
                    if let Some(l) = &r.covariates[k] {
                        let tv_state = out.tv_state_of(l).expect("values in support");
                        let ad_state = out.ad_state_of_values(l).expect("values in support");
                        for (c, &v) in l.iter().enumerate() {
                            let m = out.tv_support[c].len();
                            let vi = out.tv_support[c]
                                .iter()
                                .position(|&s| s == v)
                                .expect("in support");
                            let row = if out.partition.is_ad(&ds.tv_names[c]) {
                                hist * 2 + a
                            } else {
                                (hist * n_ad_states + ad_state) * 2 + a
                            };
                            dens[k][c][row * m + vi] += 1.0;
                        }
                        hist = out.extend_history(hist, tv_state);
                        continue;
                    }
                }
                break; // history ends once truncated or censored
            }
        }
        if r.survived() {
            // The full history exists for every survivor under the terminal
            // ordering, and for uncensored survivors under the standard one.
            if let Some(hist_k) = full_history(&out, r, kk) {
                if terminal_ordering && has_c {
                    term_c.0[hist_k * 2 + a] += r.censoring[kk] as f64;
                    term_c.1[hist_k * 2 + a] += 1.0;
                }
                if let Some(y) = r.outcome {
                    y_sum[hist_k * 2 + a] += y;
                    y_cnt[hist_k * 2 + a] += 1.0;
                }
            }
        }
    }

    let n = ds.n() as f64;
    out.l0_pmf = l0_counts.iter().map(|c| c / n).collect();
    out.treat = treat_counts
        .iter()
        .map(|&(ones, tot)| if tot > 0.0 { ones / tot } else { f64::NAN })
        .collect();
    out.event = ev.into_iter().map(|(s, c)| finalize_mean(s, c)).collect();
    if !terminal_ordering && has_c {
        out.interim_censor = Some(ce.into_iter().map(|(s, c)| finalize_mean(s, c)).collect());
    }
    if terminal_ordering && has_c {
        out.terminal_censor = Some(finalize_mean(term_c.0, term_c.1));
    }
    out.density = dens
        .into_iter()
        .enumerate()
        .map(|(_, per_comp)| {
            per_comp
                .into_iter()
                .enumerate()
                .map(|(c, counts)| DensityTable {
                    probs: normalize_rows(counts, out.tv_support[c].len()),
                })
                .collect()
        })
        .collect();
    out.outcome = finalize_mean(y_sum, y_cnt);
    Ok(out)
}

fn full_history(law: &DiscreteLaw, r: &crate::data::LongitudinalRecord, kk: usize) -> Option<usize> {
    let mut hist = law.l0_cell_of(&r.baseline)?;
    for k in 0..kk {
        let l = r.covariates[k].as_ref()?;
        hist = law.extend_history(hist, law.tv_state_of(l)?);
    }
    Some(hist)
}

fn finalize_mean(sum: Vec<f64>, count: Vec<f64>) -> Vec<f64> {
    sum.into_iter()
        .zip(count)
        .map(|(s, c)| if c > 0.0 { s / c } else { f64::NAN })
        .collect()
}

fn normalize_rows(counts: Vec<f64>, m: usize) -> Vec<f64> {
    let mut out = counts;
    for row in out.chunks_mut(m) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            for v in row.iter_mut() {
                *v /= total;
            }
        } else {
            for v in row.iter_mut() {
                *v = f64::NAN;
            }
        }
    }
    out
}

fn insert_sorted(support: &mut Vec<f64>, v: f64) {
    match support.binary_search_by(|s| s.partial_cmp(&v).unwrap()) {
        Ok(_) => {}
        Err(pos) => support.insert(pos, v),
    }
}

/// A randomly generated valid discrete law for property tests: binary
/// covariates, every conditional probability bounded away from 0 and 1, a
/// random covariate partition, and a random censoring mechanism.
pub fn random_valid_law(seed: u64, kk: usize) -> DiscreteLaw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = 1 + (rng.gen::<u64>() % 2) as usize;
    let ntv = 1 + (rng.gen::<u64>() % 2) as usize;
    let censor_mode = rng.gen::<u64>() % 3; // 0 none, 1 interim, 2 terminal
    let ordering = if censor_mode == 2 {
        OrderingVariant::TerminalDBeforeC
    } else {
        OrderingVariant::StandardCdl
    };
    let binary = vec![0.0, 1.0];
    let tv_names: Vec<String> = (0..ntv).map(|c| format!("l{c}")).collect();
    let mut ay_block = Vec::new();
    let mut ad_block = Vec::new();
    for name in &tv_names {
        if rng.gen::<f64>() < 0.5 {
            ad_block.push(name.clone());
        } else {
            ay_block.push(name.clone());
        }
    }
    let mut law = DiscreteLaw {
        grid: TimeGrid::new(kk, ordering),
        baseline_names: (0..n0).map(|c| format!("x{c}")).collect(),
        tv_names,
        partition: CovariatePartition { ay_block, ad_block },
        baseline_support: vec![binary.clone(); n0],
        tv_support: vec![binary; ntv],
        l0_pmf: Vec::new(),
        treat: Vec::new(),
        event: Vec::new(),
        interim_censor: None,
        terminal_censor: None,
        density: Vec::new(),
        outcome: Vec::new(),
    };
    let n_l0 = law.n_l0_states();
    let n_tv = law.n_tv_states();
    let n_ad_states = law.n_ad_states();

    let mut raw: Vec<f64> = (0..n_l0).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    for v in &mut raw {
        *v /= total;
    }
    law.l0_pmf = raw;
    law.treat = (0..n_l0).map(|_| rng.gen_range(0.2..0.8)).collect();

    let mut event = Vec::new();
    let mut interim = Vec::new();
    for k in 0..=kk {
        let n_hist = n_l0 * n_tv.pow(k as u32);
        event.push((0..n_hist * 2).map(|_| rng.gen_range(0.05..0.6)).collect());
        interim.push((0..n_hist * 2).map(|_| rng.gen_range(0.02..0.3)).collect());
    }
    law.event = event;
    if censor_mode == 1 {
        law.interim_censor = Some(interim);
    }

    let ad_comps = law.ad_components();
    let mut density = Vec::new();
    for k in 0..kk {
        let n_hist = n_l0 * n_tv.pow(k as u32);
        let mut per_comp = Vec::new();
        for c in 0..ntv {
            let rows = if ad_comps.contains(&c) {
                n_hist * 2
            } else {
                n_hist * n_ad_states * 2
            };
            let mut probs = Vec::with_capacity(rows * 2);
            for _ in 0..rows {
                let p = rng.gen_range(0.1..0.9);
                probs.push(1.0 - p);
                probs.push(p);
            }
            per_comp.push(DensityTable { probs });
        }
        density.push(per_comp);
    }
    law.density = density;

    let n_hist_k = n_l0 * n_tv.pow(kk as u32);
    law.outcome = (0..n_hist_k * 2).map(|_| rng.gen_range(-5.0..5.0)).collect();
    if censor_mode == 2 {
        law.terminal_censor = Some((0..n_hist_k * 2).map(|_| rng.gen_range(0.05..0.5)).collect());
    }
    law
}
