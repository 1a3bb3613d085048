use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line} has {got} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("{path}: non-numeric cell {token:?} at row {row}, col {col}")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        col: usize,
        token: String,
    },

    #[error("duplicate asset id {id:?}")]
    DuplicateAssetId { id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dim {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (defect {defect:.3e} exceeds tolerance {tol:.3e})")]
    Asymmetric { defect: f64, tol: f64 },

    #[error("QP solver failed: {0}")]
    QpFailure(String),

    #[error("QP subproblem did not converge at outer iteration {iter}")]
    QpNoConvergence { iter: usize },

    #[error("QP subproblem is infeasible")]
    QpInfeasible,

    #[error(
        "line search exceeded {cap} backtracking steps; the subproblem \
         was likely solved too loosely to yield a descent direction"
    )]
    LineSearchCap { cap: usize },

    #[error("infeasible initial point: {0}")]
    InfeasibleStart(String),

    #[error("parse error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
