//! Per-iteration diagnostics and the infeasibility test built on them.

use serde::Serialize;

/// Diagnostics of one iteration. Differences are between consecutive
/// iterates; `v` is the DR iterate `w - λ` after the step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub norm_dy: f64,
    pub norm_dw: f64,
    pub norm_dlam: f64,
    pub norm_dv: f64,
    /// `λ'(w - y)/(‖λ‖‖w - y‖)`, NaN when either norm is below 1e-14.
    pub cos_theta: f64,
    /// `max(‖Δy‖, β‖Δw‖)/max(β‖Δw‖, ‖Δλ‖)`
    pub ratio_b: f64,
    /// `max(β‖Δw‖, ‖Δλ‖)`
    pub opt_residual: f64,
    /// `λ_i (w_i - y_i) >= 0` for every i.
    pub sign_aligned: bool,
    /// `‖Δv^k - Δv^{k-1}‖/‖v^k‖`, NaN on the first iteration.
    pub dv_change_ratio: f64,
    /// `‖v - v*‖`, with a reference solution.
    pub dist_v: Option<f64>,
    /// `dist_v` over the previous iteration's `dist_v`.
    pub rate: Option<f64>,
    /// Whether the iterate active set is inside the reference one.
    pub active_subset: Option<bool>,
    /// `‖λ - λ*/β‖/dist_v`
    pub alpha: Option<f64>,
}

/// Thresholds of the four infeasibility conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorTolerances {
    pub eps_o: f64,
    pub eps_r: f64,
    pub eps_a: f64,
    pub eps_v: f64,
}

impl Default for DetectorTolerances {
    fn default() -> Self {
        Self {
            eps_o: 1e-6,
            eps_r: 1e-3,
            eps_a: 1e-3,
            eps_v: 1e-4,
        }
    }
}

/// Outcome of each condition, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetectorConditions {
    pub not_optimal: bool,
    pub ratio: bool,
    pub angle: bool,
    pub sign_or_steady: bool,
}

impl DetectorConditions {
    pub fn all(&self) -> bool {
        self.not_optimal && self.ratio && self.angle && self.sign_or_steady
    }
}

pub fn detector_conditions(row: &TraceRow, tol: &DetectorTolerances) -> DetectorConditions {
    DetectorConditions {
        not_optimal: row.opt_residual > tol.eps_o,
        ratio: row.ratio_b <= tol.eps_r,
        // NaN compares false.
        angle: row.cos_theta >= 1.0 - tol.eps_a,
        sign_or_steady: row.sign_aligned || row.dv_change_ratio <= tol.eps_v,
    }
}

/// True when the iterate looks like a divergent run on an infeasible problem.
pub fn detect_infeasibility(row: &TraceRow, tol: &DetectorTolerances) -> bool {
    detector_conditions(row, tol).all()
}
