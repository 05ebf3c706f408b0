//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),

    #[error("matrix is not symmetric: |a[{i},{j}] - a[{j},{i}]| = {delta:e}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph disconnected after {retries} sampling attempts")]
    Disconnected { retries: usize },

    #[error("wrong filter class: expected {expected}, got {got}")]
    WrongClass { expected: String, got: String },

    #[error("basis is not orthonormal: max deviation {0:e} from V^T V = I")]
    NotOrthonormal(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown target movie {id}; most-rated candidates: {candidates}")]
    UnknownTarget { id: u32, candidates: String },

    #[error("missing forward cache; run forward before backward")]
    MissingCache,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
