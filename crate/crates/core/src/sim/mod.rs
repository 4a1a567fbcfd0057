//! Structural trial simulator with a treatment decomposed into an
//! outcome-pathway component and an event-pathway component, plus
//! Monte-Carlo oracles for the resulting estimands.

mod engine;
mod law;
mod noise;
mod oracle;
#[cfg(test)]
mod tests;

pub use engine::{
    draw_counterfactual, partition_from_law, simulate, CounterfactualDraw, Design,
};
pub use law::{
    AssignCoefs, BaselineDist, BaselineSpec, CensorCoefs, CensoringSpec, Channel, DensityCoefs,
    HazardCoefs, OutcomeCoefs, StructuralLaw, TvCovariateSpec, ViolationKind,
    INJECT_AD_ON_OUTCOME, INJECT_AY_ON_HAZARD, INJECT_MT_HAZARD_SHIFT, INJECT_MT_OUTCOME_SHIFT,
    INJECT_WRONG_ARM_ON_DENSITY,
};
pub use noise::{individual_rng, open_uniform, NoiseRecord};
pub use oracle::{
    exact_survivor_distribution, exact_two_arm_survival, oracle_conditional_mean, oracle_sace,
    SurvivorCell,
};
