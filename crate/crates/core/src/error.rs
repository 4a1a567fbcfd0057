//! Error types shared across the crate, one enum per subsystem.

use thiserror::Error;

/// Errors raised by dataset-level operations.
#[derive(Debug, Clone, Error)]
pub enum DataError {
    #[error("no records satisfy the restriction (arm={arm}, event-free at K+1)")]
    EmptySubset { arm: u8 },
    #[error("operation requires a two-arm dataset")]
    NotTwoArm,
}

/// Errors raised by the structural simulator and its oracles.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("invalid structural law: {0}")]
    InvalidLaw(String),
    #[error("degenerate oracle: only {survivors} surviving draws (need at least {min})")]
    DegenerateOracle { survivors: usize, min: usize },
    #[error("noise record shape does not match the law ({0})")]
    NoiseShapeMismatch(String),
}

/// Errors raised while fitting or evaluating nuisance models.
#[derive(Debug, Clone, Error)]
pub enum FitError {
    #[error("design matrix is rank deficient on the risk set (column {column})")]
    RankDeficient { column: usize },
    #[error("separation detected: |coefficient| exceeds {limit} on standardized predictor `{term}`")]
    Separation { term: String, limit: f64 },
    #[error("empty risk set for channel {channel}")]
    NoRiskSet { channel: String },
    #[error("missing predictor value for term `{term}`")]
    MissingPredictor { term: String },
    #[error("model fit failed for channel {channel}: {source}")]
    Channel {
        channel: String,
        #[source]
        source: Box<FitError>,
    },
    #[error("formula parse error: {0}")]
    Formula(String),
}

/// Errors raised by the exact identification evaluators.
#[derive(Debug, Clone, Error)]
pub enum IdentError {
    #[error("positivity violation at {cell}")]
    PositivityViolation { cell: String },
    #[error("discrete support too large: {cells} cells exceeds limit {limit}")]
    TooLarge { cells: u64, limit: u64 },
    #[error("law not representable as a discrete law: {0}")]
    Unsupported(String),
}

/// Errors raised by the sample estimators.
#[derive(Debug, Clone, Error)]
pub enum EstimError {
    #[error("no uncensored survivors in arm {arm}")]
    NoSurvivors { arm: u8 },
    #[error("missing nuisance model for channel {channel}")]
    MissingNuisance { channel: String },
    #[error("extreme positivity: weight denominator probability {prob:.3e} below {min:.0e}")]
    ExtremePositivity { prob: f64, min: f64 },
    #[error("effect targets must share a_D (got {0} and {1})")]
    MismatchedAD(u8, u8),
    #[error("estimators require a two-arm dataset")]
    NotTwoArm,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Ident(#[from] IdentError),
}

/// Errors raised by the bootstrap.
#[derive(Debug, Clone, Error)]
pub enum BootError {
    #[error("too many failed bootstrap replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },
    #[error(transparent)]
    Estim(#[from] EstimError),
}

/// Errors raised by the diagnostics.
#[derive(Debug, Clone, Error)]
pub enum DiagError {
    #[error("insufficient data in stratum {stratum}: {count} at-risk individuals (need {min})")]
    InsufficientData {
        stratum: String,
        count: usize,
        min: usize,
    },
    #[error("diagnostic requires a {expected} design")]
    WrongDesign { expected: &'static str },
}
