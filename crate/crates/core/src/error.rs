use thiserror::Error;

use crate::tuning::TuningResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input matrix is rank deficient (rank {rank} < {expected})")]
    Rank { rank: usize, expected: usize },

    #[error("q_star is not an assignable equilibrium: |G_perp grad V|_inf = {residual:e} > {tol:e}")]
    UnassignableEquilibrium { residual: f64, tol: f64 },

    /// The shaped energy does not have an isolated minimum at the target.
    #[error("assumption failure: {matrix} is not positive definite (eigenvalue {eigenvalue:e})")]
    AssumptionFailure { matrix: &'static str, eigenvalue: f64 },

    #[error("Cholesky decomposition failed at pivot {pivot} (value {value:e})")]
    Decomposition { pivot: usize, value: f64 },

    #[error("numerically singular matrix: {0}")]
    Singular(&'static str),

    #[error("eigenvalue solver did not converge")]
    Solver,

    #[error("damping ratio undefined for a zero eigenvalue")]
    UndefinedRatio,

    #[error("infeasible: {reason}")]
    Infeasible {
        reason: String,
        result: Box<TuningResult>,
    },

    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },
}
