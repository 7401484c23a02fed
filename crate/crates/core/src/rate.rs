//! Worst-case contraction factors, Friedrichs cosines and active-set tracking.

use nalgebra::{DMatrix, DVector, SVD};
use serde::Serialize;

use crate::error::{QpError, Result};
use crate::problem::{KktPoint, QpProblem};
use crate::scalar::Real;

const GRID: usize = 801;
const ZOOM: usize = 41;
const ZOOM_LEVELS: usize = 30;
const STARTS: usize = 8;
const GOLDEN_TOL: f64 = 1e-9;

/// Arguments of the worst-case factor: `κ = ‖M_Z‖`, `c_F`, `α^max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateQuery {
    pub mz_norm: f64,
    pub c_f: f64,
    pub alpha_max: f64,
}

impl RateQuery {
    pub fn new(mz_norm: f64, c_f: f64, alpha_max: f64) -> Result<Self> {
        let check = |name: &'static str, x: f64, hi_open: bool| {
            let ok = x >= 0.0 && if hi_open { x < 1.0 } else { x <= 1.0 };
            if ok {
                Ok(())
            } else {
                Err(QpError::InvalidOption {
                    name,
                    reason: format!("{x} outside {}", if hi_open { "[0, 1)" } else { "[0, 1]" }),
                })
            }
        };
        check("mz_norm", mz_norm, true)?;
        check("c_f", c_f, false)?;
        check("alpha_max", alpha_max, false)?;
        Ok(Self { mz_norm, c_f, alpha_max })
    }

    pub fn delta(&self) -> f64 {
        worst_case_delta(self.mz_norm, self.c_f, self.alpha_max)
    }
}

/// Squared objective of the reduced 2-D problem at `(ζ_u, ζ_v)`, with `α`
/// and `γ` at their best feasible values.
fn reduced_objective(kappa: f64, c: f64, alpha_max: f64, zu: f64, zv: f64) -> f64 {
    let alpha = if c < 1.0 {
        alpha_max.min((zu + zv) / (2.0 * (1.0 - c * c).sqrt()))
    } else {
        alpha_max
    };
    let s = (1.0 - zu * zu).max(0.0).sqrt() + (1.0 - zv * zv).max(0.0).sqrt();
    let gamma2 = (4.0 * c * c * alpha * alpha).min(s * s);
    let lin = kappa * zu + zv;
    0.25 * (lin * lin + gamma2)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// `δ(κ, c_F, α^max)`: square root of the supremum of
/// `¼((κζ_u + ζ_v)² + γ²)` subject to
///
/// ```text
/// (ζ_u + ζ_v)² >= 4(1 - c_F²)α²,  γ² <= 4c_F²α²,
/// γ² <= (√(1-ζ_u²) + √(1-ζ_v²))²,  ζ_u, ζ_v ∈ [0,1],  α ∈ [0, α^max].
/// ```
///
/// `α` and `γ` are eliminated in closed form; the remaining 2-D problem is
/// searched on an 801×801 grid, then the best cells are refined by nested
/// zoom grids and a coordinate-wise golden-section pass.
pub fn worst_case_delta(mz_norm: f64, c_f: f64, alpha_max: f64) -> f64 {
    let f = |zu: f64, zv: f64| reduced_objective(mz_norm, c_f, alpha_max, zu, zv);
    let h0 = 1.0 / (GRID - 1) as f64;

    let mut vals = vec![0.0; GRID * GRID];
    for i in 0..GRID {
        for j in 0..GRID {
            vals[i * GRID + j] = f(i as f64 * h0, j as f64 * h0);
        }
    }
    let mut peaks: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..GRID {
        for j in 0..GRID {
            let x = vals[i * GRID + j];
            let is_peak = (i.saturating_sub(1)..=(i + 1).min(GRID - 1)).all(|a| {
                (j.saturating_sub(1)..=(j + 1).min(GRID - 1)).all(|b| vals[a * GRID + b] <= x)
            });
            if is_peak {
                peaks.push((x, i, j));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut starts: Vec<(usize, usize)> = Vec::new();
    for &(_, i, j) in &peaks {
        if starts.len() == STARTS {
            break;
        }
        if starts
            .iter()
            .all(|&(si, sj)| si.abs_diff(i) > 2 || sj.abs_diff(j) > 2)
        {
            starts.push((i, j));
        }
    }

    let mut best = peaks[0].0;
    for (i, j) in starts {
        let (mut cu, mut cv) = (i as f64 * h0, j as f64 * h0);
        let mut local = f(cu, cv);
        let mut h = h0;
        for _ in 0..ZOOM_LEVELS {
            let half = (ZOOM / 2) as f64;
            let step = 4.0 * h / (ZOOM - 1) as f64;
            let (mut bu, mut bv) = (cu, cv);
            for a in 0..ZOOM {
                let zu = (cu + (a as f64 - half) * step).clamp(0.0, 1.0);
                for b in 0..ZOOM {
                    let zv = (cv + (b as f64 - half) * step).clamp(0.0, 1.0);
                    let val = f(zu, zv);
                    if val > local {
                        local = val;
                        bu = zu;
                        bv = zv;
                    }
                }
            }
            cu = bu;
            cv = bv;
            h /= 10.0;
            if h < 1e-15 {
                break;
            }
        }
        for _ in 0..3 {
            let (u, fu) = golden_max(|x| f(x, cv), (cu - h0).max(0.0), (cu + h0).min(1.0));
            if fu > local {
                local = fu;
                cu = u;
            }
            let (v, fv) = golden_max(|x| f(cu, x), (cv - h0).max(0.0), (cv + h0).min(1.0));
            if fv > local {
                local = fv;
                cv = v;
            }
        }
        best = best.max(local);
    }
    best.max(0.0).sqrt()
}

/// `‖R'E‖` for `E` the unit columns `e_i`, `i ∈ active`. Zero when `active` is empty.
pub fn friedrichs_cos<T: Real>(r: &DMatrix<T>, active: &[usize]) -> f64 {
    if active.is_empty() || r.ncols() == 0 {
        return 0.0;
    }
    let mut e = DMatrix::<f64>::zeros(r.nrows(), active.len());
    for (col, &i) in active.iter().enumerate() {
        e[(i, col)] = 1.0;
    }
    let rt_e = r.map(|x| x.as_f64()).transpose() * e;
    SVD::new(rt_e, false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc: f64, &s| acc.max(s))
}

/// `{i : |λ_next_i - λ*_i| > tol}`.
pub fn active_set_at(lambda_next: &DVector<f64>, lambda_star: &DVector<f64>, tol: f64) -> Vec<usize> {
    (0..lambda_next.len())
        .filter(|&i| (lambda_next[i] - lambda_star[i]).abs() > tol)
        .collect()
}

pub fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|i| b.contains(i))
}

/// `√max(0, 1 - (dy_min/Δ)²)`; `None` when `dy_min` is infinite.
pub fn alpha_max(delta_k: f64, dy_min: f64) -> Result<Option<f64>> {
    if !(delta_k > 0.0) {
        return Err(QpError::Analysis(format!(
            "alpha_max needs a positive displacement, got {delta_k}"
        )));
    }
    if dy_min.is_infinite() {
        return Ok(None);
    }
    let r = dy_min / delta_k;
    Ok(Some((1.0 - r * r).max(0.0).sqrt()))
}

/// Reference-solution data needed to evaluate rate bounds along a run.
#[derive(Debug, Clone, Serialize)]
pub struct RateContext {
    pub beta: f64,
    /// `y*`
    pub y_star: DVector<f64>,
    /// `λ*/β`, the fixed point of the scaled multiplier iterate.
    pub lambda_star_scaled: DVector<f64>,
    /// `y* - λ*/β`
    pub v_star: DVector<f64>,
    pub active_star: Vec<usize>,
    pub cf_star: f64,
    /// Smallest distance from an inactive coordinate of `y*` to a finite bound.
    pub dy_min: f64,
    pub i_min: Option<usize>,
    pub mz_norm: f64,
    /// Tolerance used by [`RateContext::active_at`].
    pub active_tol: f64,
}

impl RateContext {
    /// `reference` must be a solution of `problem` (typically from the oracle).
    pub fn new<T: Real>(
        problem: &QpProblem<T>,
        reference: &KktPoint<T>,
        r: &DMatrix<T>,
        beta: T,
        mz_norm: T,
    ) -> Self {
        let beta_f = beta.as_f64();
        let y = reference.y.map(|x| x.as_f64());
        let lam = reference.lambda.map(|x| x.as_f64() / beta_f);
        let lo = problem.bounds().lower().map(|x| x.as_f64());
        let hi = problem.bounds().upper().map(|x| x.as_f64());
        let tol = 1e-9 * (1.0 + y.amax());
        let mut active_star = Vec::new();
        let mut dy_min = f64::INFINITY;
        let mut i_min = None;
        for i in 0..y.len() {
            let d_lo = y[i] - lo[i];
            let d_hi = hi[i] - y[i];
            if d_lo.abs() <= tol || d_hi.abs() <= tol {
                active_star.push(i);
            } else {
                let d = d_lo.min(d_hi);
                if d < dy_min {
                    dy_min = d;
                    i_min = Some(i);
                }
            }
        }
        let cf_star = friedrichs_cos(r, &active_star);
        let active_tol = 1e-6 * (1.0 + lam.norm());
        Self {
            beta: beta_f,
            v_star: &y - &lam,
            y_star: y,
            lambda_star_scaled: lam,
            active_star,
            cf_star,
            dy_min,
            i_min,
            mz_norm: mz_norm.as_f64(),
            active_tol,
        }
    }

    /// `𝒜^k` from the scaled multiplier `λ^{k+1}`, and whether `𝒜^k ⊆ 𝒜*`.
    pub fn active_at(&self, lambda_next: &DVector<f64>) -> (Vec<usize>, bool) {
        let set = active_set_at(lambda_next, &self.lambda_star_scaled, self.active_tol);
        let sub = is_subset(&set, &self.active_star);
        (set, sub)
    }

    /// `α^max(Δ)`, with 1 standing in when no inactive coordinate has a finite bound.
    pub fn alpha_max_at(&self, delta: f64) -> f64 {
        match alpha_max(delta, self.dy_min) {
            Ok(Some(a)) => a,
            _ => 1.0,
        }
    }

    /// `δ^G = max(δ(κ, c_F*, 1), δ(κ, 1, α^max(Δ⁰)))` with `Δ⁰ = ‖v⁰ - v*‖`.
    pub fn global_rate(&self, v0: &DVector<f64>) -> Result<f64> {
        let first = worst_case_delta(self.mz_norm, self.cf_star, 1.0);
        if self.dy_min.is_infinite() {
            return Ok(first);
        }
        let d0 = (v0 - &self.v_star).norm();
        let am = alpha_max(d0, self.dy_min)?.unwrap_or(1.0);
        Ok(first.max(worst_case_delta(self.mz_norm, 1.0, am)))
    }

    /// Bound on `‖v^{k+1} - v*‖/‖v^k - v*‖` from quantities at `v^k`.
    ///
    /// `dist_v = ‖v^k - v*‖`, `alpha = ‖λ^{k+1} - λ*/β‖/dist_v`, and `subset`
    /// tells whether `𝒜^k ⊆ 𝒜*`.
    pub fn per_iteration_bound(&self, dist_v: f64, alpha: f64, subset: bool) -> f64 {
        if dist_v < 1e-12 {
            return 0.0;
        }
        if subset {
            worst_case_delta(self.mz_norm, self.cf_star, alpha.min(1.0))
        } else {
            worst_case_delta(self.mz_norm, 1.0, self.alpha_max_at(dist_v))
        }
    }
}

/// Which table to lay out: rows indexed by `c_F` (with `α^max = 1`) or by
/// `α^max` (with `c_F = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    CosF,
    AlphaMax,
}

pub const TABLE_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.999];

/// `table[row][col]` with rows from `row_values` and columns from `mz_values`.
pub fn rate_table(mode: TableMode, row_values: &[f64], mz_values: &[f64]) -> Vec<Vec<f64>> {
    row_values
        .iter()
        .map(|&r| {
            mz_values
                .iter()
                .map(|&k| match mode {
                    TableMode::CosF => worst_case_delta(k, r, 1.0),
                    TableMode::AlphaMax => worst_case_delta(k, 1.0, r),
                })
                .collect()
        })
        .collect()
}

/// TSV with a header of `‖M_Z‖` values and the row parameter in the first column.
pub fn format_table(mode: TableMode, row_values: &[f64], mz_values: &[f64], table: &[Vec<f64>]) -> String {
    let head = match mode {
        TableMode::CosF => "c_F\\mz_norm",
        TableMode::AlphaMax => "alpha_max\\mz_norm",
    };
    let mut out = String::from(head);
    for k in mz_values {
        out.push_str(&format!("\t{k:.3}"));
    }
    out.push('\n');
    for (r, row) in row_values.iter().zip(table) {
        out.push_str(&format!("{r:.3}"));
        for x in row {
            out.push_str(&format!("\t{x:.6}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn corner_values() {
        assert_relative_eq!(worst_case_delta(0.0, 0.0, 0.0), 0.5, epsilon = 1e-9);
        assert_relative_eq!(worst_case_delta(0.6, 0.0, 1.0), 0.8, epsilon = 1e-9);
        assert_relative_eq!(worst_case_delta(0.4, 0.6, 1.0), 0.830, epsilon = 5e-3);
        assert_relative_eq!(worst_case_delta(0.8, 1.0, 0.8), 0.966, epsilon = 5e-3);
    }

    #[test]
    fn zero_cos_is_half_one_plus_kappa() {
        for k in [0.0, 0.1, 0.35, 0.9] {
            for a in [0.0, 0.5, 1.0] {
                assert_relative_eq!(worst_case_delta(k, 0.0, a), 0.5 * (1.0 + k), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn below_one_off_the_corner() {
        assert!(worst_case_delta(0.999, 0.999, 1.0) < 1.0);
        assert!(worst_case_delta(0.999, 1.0, 0.999) < 1.0);
        assert!(worst_case_delta(0.5, 0.9, 1.0) < 1.0);
    }

    #[test]
    fn alpha_max_formula() {
        assert_eq!(alpha_max(1.0, 1.0).unwrap(), Some(0.0));
        assert_relative_eq!(alpha_max(2f64.sqrt(), 1.0).unwrap().unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_eq!(alpha_max(0.5, 1.0).unwrap(), Some(0.0));
        assert_eq!(alpha_max(1.0, f64::INFINITY).unwrap(), None);
        assert!(alpha_max(0.0, 1.0).is_err());
    }

    #[test]
    fn friedrichs_values() {
        let s = 0.5f64.sqrt();
        let r = DMatrix::from_column_slice(2, 1, &[s, s]);
        assert_relative_eq!(friedrichs_cos(&r, &[0]), s, epsilon = 1e-12);
        assert_eq!(friedrichs_cos(&r, &[]), 0.0);
        let r2 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert_eq!(friedrichs_cos(&r2, &[1, 2]), 0.0);
    }

    #[test]
    fn active_sets() {
        let star = DVector::from_vec(vec![2.0, 0.0]);
        assert!(active_set_at(&star, &star, 1e-9).is_empty());
        let bumped = DVector::from_vec(vec![2.0, 1.0]);
        let set = active_set_at(&bumped, &star, 1e-9);
        assert_eq!(set, vec![1]);
        assert!(!is_subset(&set, &[0]));
        assert!(is_subset(&[], &[0]));
    }

    #[test]
    fn query_ranges() {
        assert!(RateQuery::new(1.0, 0.5, 0.5).is_err());
        assert!(RateQuery::new(0.5, 1.1, 0.5).is_err());
        assert!(RateQuery::new(0.5, 1.0, 1.0).is_ok());
    }
}
