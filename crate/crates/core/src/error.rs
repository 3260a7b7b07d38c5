//! Error type shared across the crate.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("parameter {name} = {value} violates: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("observation {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },

    #[error("design is rank deficient: {detail}")]
    RankDeficient { detail: String },

    #[error("matrix {what} is singular or not positive definite")]
    SingularMatrix { what: &'static str },

    #[error("cumulative hazard diverges at t = {t}: survival estimate is zero")]
    HazardDiverges { t: f64 },

    #[error("{failed} of {total} replicates failed ({context})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        context: &'static str,
    },

    #[error("calibration could not bracket the target rate {target}")]
    BracketNotFound { target: f64 },

    #[error("active set is empty")]
    EmptyActiveSet,
}

pub type Result<T> = std::result::Result<T, Error>;
