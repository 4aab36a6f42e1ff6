use thiserror::Error;

use crate::estimators::Estimand;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("document {id}: missing field `{field}`")]
    MissingField { id: String, field: &'static str },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("treatment arm {treated} has no documents")]
    EmptyArm { treated: bool },

    #[error("no documents in cell (c={covariate}, t={treated})")]
    EmptyCell { covariate: usize, treated: u8 },

    #[error("covariate level {0} has no documents")]
    MissingCovariateLevel(usize),

    #[error("label class {0} is absent")]
    ClassAbsent(u8),

    #[error("singular measurement matrix at (c={covariate}, y={outcome}): 1 - epsilon - delta = {determinant}")]
    SingularMeasurement {
        covariate: usize,
        outcome: u8,
        determinant: f64,
    },

    #[error("recovered treatment arm t={treated} has zero mass in stratum c={covariate}")]
    ZeroRecoveredMass { covariate: usize, treated: u8 },

    #[error("overlap violated: {0}")]
    Overlap(String),

    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error("text support of {size} sequences exceeds the enumeration cap of {cap}")]
    SupportTooLarge { size: usize, cap: usize },

    #[error("document {id}: embedding has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },

    #[error("cannot aggregate estimates of different estimands ({0} and {1})")]
    MixedEstimands(Estimand, Estimand),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
