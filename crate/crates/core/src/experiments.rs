//! Penalty sweeps against an oracle reference.

use serde::Serialize;

use crate::admm::{solve, BetaChoice, SolveOptions, SolveStatus, TraceRow};
use crate::error::{QpError, Result};
use crate::oracle::{oracle_solve, OracleStatus};
use crate::problem::QpProblem;
use crate::scalar::Real;
use crate::subspace::optimal_beta;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// First iteration from which the iterate active set stays inside the
    /// reference one.
    pub iterations_to_subset: Option<usize>,
    pub is_optimal_beta: bool,
}

/// First `k` after which every row reports `active_subset`.
pub fn subset_crossover(trace: &[TraceRow]) -> Option<usize> {
    let last_bad = trace.iter().rposition(|r| r.active_subset != Some(true));
    match last_bad {
        None => trace.first().map(|r| r.k),
        Some(i) => trace.get(i + 1).map(|r| r.k),
    }
}

/// `count` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Solves once per `beta` (plus once at the optimal beta) with the oracle
/// solution as reference. Rows are sorted by beta.
pub fn beta_sweep<T: Real>(problem: &QpProblem<T>, betas: &[T], base: &SolveOptions<T>) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(QpError::InvalidOption {
            name: "beta grid",
            reason: "empty".into(),
        });
    }
    let reference = oracle_solve(problem)?;
    if reference.status != OracleStatus::Optimal {
        return Err(QpError::Analysis("beta sweep needs a feasible problem".into()));
    }
    let star = optimal_beta(problem)?;
    let mut grid: Vec<(T, bool)> = betas.iter().map(|&b| (b, false)).collect();
    grid.push((star, true));
    grid.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    grid.into_iter()
        .map(|(beta, is_star)| {
            let opts = SolveOptions {
                beta: BetaChoice::Fixed(beta),
                reference: reference.kkt.clone(),
                trace_every: 1,
                ..base.clone()
            };
            let r = solve(problem, &opts)?;
            Ok(SweepRow {
                beta: beta.as_f64(),
                status: r.status,
                iterations: r.iterations,
                iterations_to_subset: subset_crossover(&r.trace),
                is_optimal_beta: is_star,
            })
        })
        .collect()
}
