use crate::data::{validate_dataset, ArmAssignment, DesignKind};
use crate::presets::{desk_law_k1, monotone_law_k1, no_event_effect_law_k1, null_law_k1};
use crate::sim::*;

#[test]
fn same_seed_same_dataset() {
    let law = desk_law_k1();
    let a = simulate(&law, 500, 7, Design::TwoArm, None).unwrap();
    let b = simulate(&law, 500, 7, Design::TwoArm, None).unwrap();
    assert_eq!(a, b);
    let c = simulate(&law, 500, 8, Design::TwoArm, None).unwrap();
    assert_ne!(a, c);
}

#[test]
fn output_independent_of_thread_count() {
    let law = desk_law_k1();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| simulate(&law, 400, 11, Design::FourArm, None).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn simulated_datasets_are_schema_valid() {
    for (seed, design) in [
        (1, Design::TwoArm),
        (2, Design::FourArm),
        (3, Design::SixArm),
    ] {
        for law in [desk_law_k1(), null_law_k1(), crate::presets::censored_law_k1()] {
            let ds = simulate(&law, 300, seed, design, None).unwrap();
            assert!(validate_dataset(&ds).is_empty());
        }
    }
    let swog = crate::presets::swog_like_law();
    let ds = simulate(&swog, 487, 42, Design::TwoArm, None).unwrap();
    assert!(validate_dataset(&ds).is_empty());
}

#[test]
fn null_law_arms_are_symmetric() {
    let ds = simulate(&null_law_k1(), 1000, 13, Design::TwoArm, None).unwrap();
    let frac = |a: u8| {
        let (mut n, mut s) = (0.0, 0.0);
        for r in &ds.records {
            if r.arm.two_arm() == Some(a) {
                n += 1.0;
                s += r.survived() as u8 as f64;
            }
        }
        (s / n, n)
    };
    let (p1, n1) = frac(1);
    let (p0, n0) = frac(0);
    let pooled = (p1 * n1 + p0 * n0) / (n1 + n0);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n0)).sqrt();
    assert!(
        (p1 - p0).abs() < 4.0 * se,
        "survival {p1} vs {p0}, se {se}"
    );
}

#[test]
fn six_arm_mixes_designs() {
    let ds = simulate(&desk_law_k1(), 600, 5, Design::SixArm, None).unwrap();
    assert_eq!(ds.design(), DesignKind::SixArm);
    let two = ds
        .records
        .iter()
        .filter(|r| matches!(r.arm, ArmAssignment::TwoArm { .. }))
        .count();
    // 2 of 6 cells
    assert!((two as f64 / 600.0 - 1.0 / 3.0).abs() < 0.08);
}

#[test]
fn event_draws_invariant_to_outcome_component() {
    let law = desk_law_k1();
    for i in 0..10_000u64 {
        let mut rng = individual_rng(99, i);
        let noise = NoiseRecord::draw(&mut rng, &law);
        for a_d in 0..=1 {
            let d0 = draw_counterfactual(&law, &noise, 0, a_d).unwrap();
            let d1 = draw_counterfactual(&law, &noise, 1, a_d).unwrap();
            assert_eq!(d0.events, d1.events, "noise {i}, a_d {a_d}");
        }
    }
}

#[test]
fn isolation_break_creates_discordant_events() {
    let law = desk_law_k1().with_violation(ViolationKind::BreakAyIsolation);
    let mut found = false;
    for i in 0..5_000u64 {
        let mut rng = individual_rng(17, i);
        let noise = NoiseRecord::draw(&mut rng, &law);
        let d0 = draw_counterfactual(&law, &noise, 0, 1).unwrap();
        let d1 = draw_counterfactual(&law, &noise, 1, 1).unwrap();
        if d0.events != d1.events {
            found = true;
            break;
        }
    }
    assert!(found, "no discordant pair under injected isolation break");
}

#[test]
fn joint_assignment_reproduces_two_arm_world() {
    let law = desk_law_k1(); // no censoring
    let ds = simulate(&law, 300, 23, Design::TwoArm, None).unwrap();
    for (i, rec) in ds.records.iter().enumerate() {
        let mut rng = individual_rng(23, i as u64);
        let noise = NoiseRecord::draw(&mut rng, &law);
        let a = rec.arm.two_arm().unwrap();
        let cf = draw_counterfactual(&law, &noise, a, a).unwrap();
        assert_eq!(cf.events, rec.events);
        assert_eq!(cf.covariates, rec.covariates);
        assert_eq!(cf.outcome, rec.outcome);
    }
}

#[test]
fn monotone_law_orders_event_indicators_pointwise() {
    let law = monotone_law_k1();
    for i in 0..10_000u64 {
        let mut rng = individual_rng(3, i);
        let noise = NoiseRecord::draw(&mut rng, &law);
        let treated = draw_counterfactual(&law, &noise, 0, 1).unwrap();
        let control = draw_counterfactual(&law, &noise, 0, 0).unwrap();
        for (d1, d0) in treated.events.iter().zip(&control.events) {
            assert!(d1 <= d0, "noise {i}: treated event before control");
        }
    }
}

#[test]
fn survival_matches_exact_distribution() {
    let law = desk_law_k1();
    let ds = simulate(&law, 40_000, 31, Design::TwoArm, None).unwrap();
    for a in 0..=1u8 {
        let exact = exact_two_arm_survival(&law, a).unwrap();
        let (mut n, mut s) = (0.0, 0.0);
        for r in &ds.records {
            if r.arm.two_arm() == Some(a) {
                n += 1.0;
                s += r.survived() as u8 as f64;
            }
        }
        let p = s / n;
        let se = (exact * (1.0 - exact) / n).sqrt();
        assert!((p - exact).abs() < 4.0 * se, "arm {a}: {p} vs {exact}");
    }
}

#[test]
fn first_step_frequencies_match_analytic() {
    // P(D_1 = 1 | A = a, L0 = x) against the logistic hazard directly.
    let law = desk_law_k1();
    let ds = simulate(&law, 40_000, 37, Design::TwoArm, None).unwrap();
    for a in 0..=1u8 {
        for x in 0..=1u8 {
            let exact = law.hazard(0, a, a, &[x as f64], &[], false);
            let (mut n, mut d) = (0.0, 0.0);
            for r in &ds.records {
                if r.arm.two_arm() == Some(a) && r.baseline[0] as u8 == x {
                    n += 1.0;
                    d += r.events[0] as f64;
                }
            }
            let p = d / n;
            let se = (exact * (1.0 - exact) / n).sqrt();
            assert!((p - exact).abs() < 4.0 * se, "cell (a={a}, x={x}): {p} vs {exact}");
        }
    }
}

#[test]
fn oracle_null_effect_is_zero() {
    let law = null_law_k1();
    let (m1, se1) = oracle_conditional_mean(&law, 1, 0, 100_000, 5).unwrap();
    let (m0, se0) = oracle_conditional_mean(&law, 0, 0, 100_000, 6).unwrap();
    let se = (se1 * se1 + se0 * se0).sqrt();
    assert!((m1 - m0).abs() < 3.0 * se, "diff {} se {se}", m1 - m0);
}

#[test]
fn oracle_joint_equals_two_arm_survivor_mean() {
    let law = desk_law_k1();
    let (m, se) = oracle_conditional_mean(&law, 1, 1, 200_000, 9).unwrap();
    let ds = simulate(&law, 200_000, 10, Design::TwoArm, None).unwrap();
    let (mut n, mut s, mut ss) = (0.0, 0.0, 0.0);
    for r in &ds.records {
        if r.arm.two_arm() == Some(1) && r.survived() {
            let y = r.outcome.unwrap();
            n += 1.0;
            s += y;
            ss += y * y;
        }
    }
    let mean = s / n;
    let sd = ((ss - s * s / n) / (n - 1.0)).sqrt();
    let comb = (se * se + sd * sd / n).sqrt();
    assert!((m - mean).abs() < 3.0 * comb, "{m} vs {mean}");
}

#[test]
fn oracle_sace_null_and_no_event_effect() {
    // Under the null law the shared noise makes both worlds identical, so
    // the paired difference is exactly zero.
    let (d, se) = oracle_sace(&null_law_k1(), 100_000, 21).unwrap();
    assert!(d.abs() <= 3.0 * se + 1e-12);

    // With no treatment effect on the event process, the always-survivor
    // effect coincides with the conditional contrasts at both component
    // levels.
    let law = no_event_effect_law_k1();
    let (sace, se_s) = oracle_sace(&law, 400_000, 22).unwrap();
    for a_d in 0..=1u8 {
        let (m1, se1) = oracle_conditional_mean(&law, 1, a_d, 400_000, 23).unwrap();
        let (m0, se0) = oracle_conditional_mean(&law, 0, a_d, 400_000, 24).unwrap();
        let comb = (se_s * se_s + se1 * se1 + se0 * se0).sqrt();
        assert!(
            (sace - (m1 - m0)).abs() < 3.0 * comb,
            "a_d={a_d}: {sace} vs {}",
            m1 - m0
        );
    }
}

#[test]
fn degenerate_oracle_errors() {
    let mut law = desk_law_k1();
    for h in &mut law.hazard_d {
        h.intercept = 8.0;
    }
    let err = oracle_conditional_mean(&law, 0, 0, 10_000, 2).unwrap_err();
    assert!(matches!(
        err,
        crate::error::SimError::DegenerateOracle { .. }
    ));
}

#[test]
fn conditional_assignment_depends_on_baseline() {
    let mut law = desk_law_k1();
    law.assignment = Some(AssignCoefs {
        intercept: -1.0,
        l0: vec![2.0],
    });
    let ds = simulate(&law, 30_000, 44, Design::TwoArm, None).unwrap();
    let frac = |x: u8| {
        let (mut n, mut a1) = (0.0, 0.0);
        for r in &ds.records {
            if r.baseline[0] as u8 == x {
                n += 1.0;
                a1 += r.arm.two_arm().unwrap() as f64;
            }
        }
        a1 / n
    };
    assert!((frac(0) - crate::util::expit(-1.0)).abs() < 0.02);
    assert!((frac(1) - crate::util::expit(1.0)).abs() < 0.02);
}
