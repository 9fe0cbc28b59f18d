use std::path::PathBuf;

/// Errors produced by index construction, storage, and search.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("store already exists and is not empty: {0}")]
    StoreExists(PathBuf),

    #[error("node absent: level {level} node {node_id}")]
    NodeAbsent { level: u32, node_id: u64 },

    #[error("node reference out of range: level {level} node {node_id}")]
    NodeOutOfRange { level: u32, node_id: u64 },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("corrupt array at {path}: {reason}")]
    CorruptArray { path: PathBuf, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("unknown query id {0}")]
    UnknownQueryId(usize),

    #[error("query {0} is already being driven by another call")]
    QueryBusy(usize),

    #[error("query state error: {0}")]
    QueryState(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
