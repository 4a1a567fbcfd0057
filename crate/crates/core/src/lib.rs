//! Estimation of conditional separable effects from longitudinal two-arm
//! trial data, where the outcome is only defined for individuals who remain
//! free of an absorbing post-treatment event (for example death) and
//! uncensored at the end of follow-up.
//!
//! The crate provides:
//!
//! * [`data`] — domain types for discrete-time trial data with an absorbing
//!   truncating event, absorbing censoring, and an outcome defined only for
//!   uncensored survivors;
//! * [`sim`] — a structural trial simulator with shared exogenous noise
//!   across interventions, plus Monte-Carlo oracles for the target estimands;
//! * [`nuisance`] — pooled-over-time GLM fitting (event hazards, covariate
//!   densities, censoring hazards, outcome regression);
//! * [`identification`] — exact plug-in evaluation of the identifying
//!   functionals on fully discrete laws (iterated-conditional g-formula and
//!   its algebraically equivalent weighted representation);
//! * [`estimators`] — outcome-regression, weighted, and doubly robust sample
//!   estimators with censoring adjustments;
//! * [`inference`] — nonparametric percentile bootstrap;
//! * [`diagnostics`] — positivity audits and falsification tests for the
//!   treatment-decomposition assumptions.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod identification;
pub mod inference;
pub mod nuisance;
pub mod presets;
pub mod sim;
pub(crate) mod util;

pub use data::{
    ArmAssignment, CovariatePartition, LongitudinalRecord, OrderingVariant, TimeGrid,
    TrialDataset, Violation,
};
pub use error::{BootError, DataError, DiagError, EstimError, FitError, IdentError, SimError};
pub use estimators::{EstimandTarget, EstimateReport, EstimatorKind};
pub use identification::DiscreteLaw;
pub use inference::BootstrapPlan;
pub use sim::{Design, StructuralLaw, ViolationKind};
