use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch in {field}: expected {expected}, found {found}")]
    Dimension {
        field: String,
        expected: String,
        found: String,
    },
    #[error("invalid value in {field}: {reason}")]
    InvalidEntry { field: String, reason: String },
    #[error("malformed problem document: {0}")]
    Parse(String),
    #[error("constraint matrix A is rank deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },
    #[error("reduced Hessian Z^T Q Z is not positive definite (smallest eigenvalue {min_eig:e})")]
    ReducedHessianNotPd { min_eig: f64 },
    #[error("ADMM parameter beta must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("invalid option {name}: {reason}")]
    InvalidOption { name: &'static str, reason: String },
    #[error("{0}")]
    Analysis(String),
    #[error("oracle refuses problems with n = {n} > {max}")]
    OracleTooLarge { n: usize, max: usize },
    #[error("oracle found no KKT point")]
    OracleNoKktPoint,
}

pub type Result<T, E = QpError> = std::result::Result<T, E>;
