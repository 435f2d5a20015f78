use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the semibandit library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("covariance matrix is not positive semi-definite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("action space is empty")]
    EmptyActionSpace,

    #[error("matroid oracle requires an enumeration cap")]
    MissingEnumerationCap,

    #[error("action space enumeration exceeds cap of {cap} actions")]
    EnumerationOverflow { cap: usize },

    #[error("action {0:?} is not in the action space")]
    UnknownAction(Vec<usize>),

    #[error("arm {0} has never been observed")]
    UnobservedArm(usize),

    #[error("arms {0} and {1} have never been observed together")]
    NeverCoObserved(usize, usize),

    #[error("pair ({0}, {1}) does not co-occur in any action")]
    MissingPair(usize, usize),

    #[error("round index {0} is before the end of initialization (t >= 2 required)")]
    PreInitialization(u64),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("arm {0} belongs to no action and cannot be covered by initialization")]
    Uncoverable(usize),

    #[error("objective is not concave: {0}")]
    NotConcave(String),

    #[error("grid oracle supports at most 3 coordinates, got {0}")]
    OracleDimension(usize),

    #[error("invalid environment parameters: {0}")]
    InvalidEnvironment(String),

    #[error("transaction file {path}: {msg}")]
    Transactions { path: PathBuf, msg: String },

    #[error("transaction file {path}, line {line}: {msg}")]
    TransactionLine { path: PathBuf, line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{mode} mode is not available for this action space: {msg}")]
    UnsupportedMode { mode: &'static str, msg: String },

    #[error("round {round}: {source}")]
    Round {
        round: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
