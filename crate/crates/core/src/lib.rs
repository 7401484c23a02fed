//! Dense convex QP solver on ADMM / Douglas-Rachford splitting.
//!
//! Solves `min q'y + ½ y'Qy  s.t.  Ay = b, lower <= y <= upper` and reports
//! convergence-rate bounds, optimal penalty choice and infeasibility
//! certificates along the way. Everything is generic over [`Real`]; the
//! aliases below fix the scalar to `f64`.

pub mod admm;
pub mod builtin;
pub mod certify;
pub mod document;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod problem;
pub mod prox;
pub mod rate;
pub mod scalar;
pub mod subspace;

pub use admm::{admm_step, dr_step, solve, AdmmState, BetaChoice, SolveOptions, SolveStatus, TraceRow};
pub use certify::{infeasibility_minimizer, objective_shift, verify_limit, InfeasibilityCertificate};
pub use document::{load_problem, save_problem};
pub use error::{QpError, Result};
pub use oracle::{oracle_solve, OracleStatus};
pub use problem::{validate, BoxBounds, KktPoint, QpProblem, ValidationReport};
pub use rate::{worst_case_delta, RateContext, RateQuery};
pub use scalar::Real;
pub use subspace::{build_operators, null_range_basis, optimal_beta, OperatorBundle};

pub type Problem = QpProblem<f64>;
pub type Bounds = BoxBounds<f64>;
pub type Kkt = KktPoint<f64>;
pub type State = AdmmState<f64>;
pub type Options = SolveOptions<f64>;
pub type Solution = admm::SolveResult<f64>;
pub type Operators = OperatorBundle<f64>;
pub type Certificate = InfeasibilityCertificate<f64>;
