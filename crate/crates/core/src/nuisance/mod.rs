//! Nuisance model fitting and prediction: pooled-over-time event hazards,
//! time-varying covariate densities, censoring hazards, and the outcome
//! regression. Binary responses are fitted by safeguarded Newton–Raphson,
//! the outcome by least squares.

mod design;
mod formula;
mod glm;
mod suite;

pub use design::{design_row, risk_rows, term_value, Link, ModelSpec, ResponseChannel, RiskRow, Term};
pub use formula::{format_formula, parse_formula};
pub use glm::{fit_glm, fit_glm_stratified, NuisanceFit, MAX_ITER, SCORE_TOL, SEPARATION_LIMIT};
pub use suite::{
    check_suite, fit_nuisance_suite, FittedChannel, GlmSuiteFit, NuisanceSpecSuite,
    NuisanceSuiteFit,
};
