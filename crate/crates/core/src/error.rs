use std::path::PathBuf;

use crate::data::PoiId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad header, expected `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: row {row}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("duplicate POI id {0}")]
    DuplicateId(PoiId),

    #[error("unknown POI id {0}")]
    UnknownPoi(PoiId),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("infeasible query: trip length {length} exceeds the {available} available POIs")]
    Infeasible { length: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("nothing to rank: the training data yields no ranking pairs")]
    NothingToRank,

    #[error("no transitions observed and smoothing is zero")]
    NoTransitions,

    #[error("repeat visit {0} -> {0} is outside the route space")]
    SelfTransition(PoiId),

    #[error("invalid route: {0}")]
    InvalidRoute(#[from] crate::scoring::RouteViolation),

    #[error("enumeration refused: {count} candidate routes exceed the limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("emission cap hit: {filtered} candidates with repeats discarded before {found} of {wanted} routes were found")]
    EmissionCap {
        filtered: usize,
        found: usize,
        wanted: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config: {0}")]
    Config(String),

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
