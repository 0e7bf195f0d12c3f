use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the calibration engine and the demand chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node {dest} is unreachable from node {origin}")]
    UnreachableDestination { origin: u32, dest: u32 },
    #[error("unknown node id {0}")]
    UnknownNode(u32),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("no parameters configured for group `{0}`")]
    MissingGroupParams(String),
    #[error("non-positive argument to ln() in supplier utility: {what} = {value}")]
    NonPositiveLogArgument { what: &'static str, value: f64 },
    #[error("no candidate supplier for contract demand of receiver {receiver}")]
    NoCandidateSupplier { receiver: u32 },
    #[error("shipment {shipment} weighs {weight} kg, more than the vehicle capacity {capacity} kg")]
    ShipmentExceedsCapacity { shipment: u64, weight: f64, capacity: f64 },
    #[error("tour {0} has no route")]
    MissingRoute(u64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("class {class} would remove {requested} tours but only {available} exist")]
    InfeasibleAdjustment { class: usize, requested: i64, available: usize },
    #[error("contract {0} has zero initial frequency")]
    ZeroInitialFrequency(u64),
    #[error("insufficient observations for `{group}`: have {have}, need {need}")]
    InsufficientObservations { group: String, have: usize, need: usize },
    #[error("regression design for `{0}` is rank deficient")]
    RankDeficient(String),
    #[error("destination zone {0} has no quasi-observed shipments")]
    EmptyOriginRow(u32),
    #[error(
        "maximum likelihood did not converge for `{group}` after {iterations} iterations (|grad|inf = {grad_norm:e})"
    )]
    NonConvergence { group: String, iterations: usize, grad_norm: f64 },
    #[error("choices in `{0}` are perfectly predicted; the likelihood has no finite maximum")]
    Separation(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing input file {0}")]
    MissingInput(PathBuf),
    #[error("{file}: row {row}: {message}")]
    SchemaViolation { file: PathBuf, row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
