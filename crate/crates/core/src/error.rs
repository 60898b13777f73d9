use thiserror::Error;

use crate::bregman::LowRank;
use crate::eigsolve::EigenEstimate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid sparse matrix: {0}")]
    InvalidMatrix(String),

    #[error("triangular factor has non-positive diagonal at row {row}")]
    NonPositiveDiagonal { row: usize },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("incomplete Cholesky breakdown: non-positive pivot at row {row}")]
    Breakdown { row: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("dense materialization of order {n} exceeds cap {cap}")]
    DensifyCapExceeded { n: usize, cap: usize },

    #[error("eigenvalue {value} at position {index} is not greater than -1")]
    EigenvalueOutOfDomain { index: usize, value: f64 },

    #[error("eigensolver stopped with {converged} of {wanted} eigenpairs converged")]
    NoConvergence {
        converged: usize,
        wanted: usize,
        partial: Box<EigenEstimate>,
    },

    #[error("shift {eta} is not an upper bound of the spectrum (estimate {lam} <= -1)")]
    EtaTooSmall { eta: f64, lam: f64 },

    #[error("sketch core has numerical rank {achieved} < requested {requested}")]
    RankCollapse {
        achieved: usize,
        requested: usize,
        partial: Box<LowRank>,
    },

    #[error("low-rank term is infeasible: 1 + lam[{index}] = {}", 1.0 + .value)]
    InfeasibleLowRank { index: usize, value: f64 },

    #[error("preconditioner is not positive definite (<z, r> <= 0 at iteration {iteration})")]
    IndefinitePreconditionerDetected { iteration: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported Matrix Market format: {0}")]
    UnsupportedFormat(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
