use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building graphs and bank partitions.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph spec `{0}` is not recognised (expected complete:N, cycle:N, grid:RxC, path:N or file:PATH)")]
    BadSpec(String),
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("cycle needs at least 3 vertices, got {0}")]
    CycleTooSmall(usize),
    #[error("graph is disconnected: vertex {0} cannot reach vertex {1}")]
    Disconnected(String, String),
    #[error("line {line}: self-loop on vertex {vertex}")]
    SelfLoop { line: usize, vertex: String },
    #[error("line {line}: duplicate edge {u} {v}")]
    DuplicateEdge { line: usize, u: String, v: String },
    #[error("line {line}: expected two whitespace-separated fields, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("partition spec `{0}` is not recognised (expected equal:K or file:PATH)")]
    BadSpec(String),
    #[error("need at least one bank")]
    NoBanks,
    #[error("K = {banks} exceeds the number of vertices N = {vertices}")]
    TooManyBanks { banks: usize, vertices: usize },
    #[error("K does not divide N (K = {banks}, N = {vertices})")]
    Indivisible { banks: usize, vertices: usize },
    #[error("expected {expected} reserve values (one per bank), got {got}")]
    ReserveCount { expected: usize, got: usize },
    #[error("partition file does not assign vertex {0}")]
    MissingVertex(String),
    #[error("line {line}: vertex {vertex} is assigned twice")]
    DuplicateVertex { line: usize, vertex: String },
    #[error("line {line}: unknown vertex {vertex}")]
    UnknownVertex { line: usize, vertex: String },
    #[error("line {line}: bank ids start at 1, got `{text}`")]
    BadBank { line: usize, text: String },
    #[error("bank {0} has no customers")]
    EmptyBank(usize),
    #[error("line {line}: expected `vertex bank`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("vertex {vertex} is outside 0..{vertices}")]
    VertexOutOfRange { vertex: usize, vertices: usize },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("total coin count M must be positive, got {0}")]
    NonPositiveCoins(i64),
    #[error("graph has no edges, no transaction can ever take place")]
    NoEdges,
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("bank index {index} out of range (K = {banks})")]
    BankOutOfRange { index: usize, banks: usize },
    #[error("need at least one replica")]
    NoReplicas,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExactError {
    #[error("instance needs at least one bank")]
    NoBanks,
    #[error("bank sizes and reserves differ in length ({sizes} vs {reserves})")]
    LengthMismatch { sizes: usize, reserves: usize },
    #[error("bank {0} has no customers")]
    EmptyBank(usize),
    #[error("total coin count M must be positive, got {0}")]
    NonPositiveCoins(i64),
    #[error("need N >= 2 so that removing one customer leaves someone, got N = {0}")]
    TooFewVertices(u64),
    #[error("bank index {index} out of range (K = {banks})")]
    BankOutOfRange { index: usize, banks: usize },
    #[error("estimated cost {estimate:.3e} big-integer operations exceeds the limit {limit:.3e}")]
    TooCostly { estimate: f64, limit: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum LaplaceError {
    #[error("money temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("bank coin fraction rho must be non-negative and finite, got {0}")]
    BadRho(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("state space too large to enumerate: {estimate:.3e} raw candidates > {limit:.0e}")]
    TooManyStates { estimate: f64, limit: f64 },
    #[error("state {0:?} produced by the kernel is not in the enumerated set")]
    StateNotFound(Vec<i64>),
    #[error("state set layout does not match the bank partition")]
    LayoutMismatch,
    #[error("distribution is not normalised: total mass {0}")]
    NotNormalised(f64),
    #[error("histogram is empty")]
    EmptyHistogram,
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad CSV header: expected column `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("bad value in column `{column}` on row {row}: {value:?}")]
    Value { column: String, row: usize, value: String },
}
