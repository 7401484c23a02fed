//! QP instances `min q'y + ½ y'Qy  s.t.  Ay = b, lower <= y <= upper`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{QpError, Result};
use crate::prox;
use crate::scalar::Real;
use crate::subspace;

/// Asymmetry above this is reported (and warned about) before symmetrizing.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Per-coordinate bounds; entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds<T: Real> {
    lower: DVector<T>,
    upper: DVector<T>,
}

impl<T: Real> BoxBounds<T> {
    /// Builds the box without checking `lower < upper`; see [`BoxBounds::ordering_violations`].
    pub fn new(lower: DVector<T>, upper: DVector<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(QpError::Dimension {
                field: "upper".into(),
                expected: lower.len().to_string(),
                found: upper.len().to_string(),
            });
        }
        for (i, &l) in lower.iter().enumerate() {
            if l.is_nan_value() || l == T::infinity() {
                return Err(QpError::InvalidEntry {
                    field: format!("lower[{i}]"),
                    reason: format!("lower bound must be finite or -inf, got {l}"),
                });
            }
        }
        for (i, &u) in upper.iter().enumerate() {
            if u.is_nan_value() || u == T::neg_infinity() {
                return Err(QpError::InvalidEntry {
                    field: format!("upper[{i}]"),
                    reason: format!("upper bound must be finite or +inf, got {u}"),
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: DVector::from_element(n, T::neg_infinity()),
            upper: DVector::from_element(n, T::infinity()),
        }
    }

    pub fn nonnegative(n: usize) -> Self {
        Self {
            lower: DVector::zeros(n),
            upper: DVector::from_element(n, T::infinity()),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<T> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<T> {
        &self.upper
    }

    /// Coordinates where `lower_i < upper_i` fails.
    pub fn ordering_violations(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| !(self.lower[i] < self.upper[i]))
            .collect()
    }

    pub fn contains(&self, w: &DVector<T>, tol: T) -> bool {
        w.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(&x, (&l, &u))| x >= l - tol && x <= u + tol)
    }

    /// Largest componentwise excursion of `w` outside the box.
    pub fn violation(&self, w: &DVector<T>) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim() {
            let below = self.lower[i] - w[i];
            let above = w[i] - self.upper[i];
            worst = worst.max(below).max(above);
        }
        worst
    }

    /// Whether coordinate `i` of `x` is within `tol` of a finite bound.
    pub fn at_bound(&self, i: usize, x: T, tol: T) -> bool {
        (self.lower[i].is_finite() && (x - self.lower[i]).abs() <= tol)
            || (self.upper[i].is_finite() && (self.upper[i] - x).abs() <= tol)
    }
}

/// Problem data. Q is stored symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T: Real> {
    hessian: DMatrix<T>,
    linear: DVector<T>,
    a: DMatrix<T>,
    b: DVector<T>,
    bounds: BoxBounds<T>,
    asymmetry: T,
}

fn check_finite_vec<T: Real>(name: &str, v: &DVector<T>) -> Result<()> {
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(QpError::InvalidEntry {
                field: format!("{name}[{i}]"),
                reason: format!("expected a finite number, got {x}"),
            });
        }
    }
    Ok(())
}

fn check_finite_mat<T: Real>(name: &str, m: &DMatrix<T>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let x = m[(i, j)];
            if !x.is_finite() {
                return Err(QpError::InvalidEntry {
                    field: format!("{name}[{i}][{j}]"),
                    reason: format!("expected a finite number, got {x}"),
                });
            }
        }
    }
    Ok(())
}

fn dim_err(field: &str, expected: impl ToString, found: impl ToString) -> QpError {
    QpError::Dimension {
        field: field.to_string(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

impl<T: Real> QpProblem<T> {
    /// Checks dimensions and finiteness, then symmetrizes `hessian`.
    ///
    /// Modelling assumptions (row rank, bound ordering, reduced-Hessian
    /// definiteness) are reported by [`validate`], not rejected here.
    pub fn new(
        hessian: DMatrix<T>,
        linear: DVector<T>,
        a: DMatrix<T>,
        b: DVector<T>,
        bounds: BoxBounds<T>,
    ) -> Result<Self> {
        let n = linear.len();
        if n == 0 {
            return Err(dim_err("q", ">= 1", 0));
        }
        if hessian.shape() != (n, n) {
            return Err(dim_err(
                "Q",
                format!("{n}x{n}"),
                format!("{}x{}", hessian.nrows(), hessian.ncols()),
            ));
        }
        let m = b.len();
        if a.shape() != (m, n) {
            return Err(dim_err(
                "A",
                format!("{m}x{n}"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if bounds.dim() != n {
            return Err(dim_err("lower", n, bounds.dim()));
        }
        check_finite_mat("Q", &hessian)?;
        check_finite_vec("q", &linear)?;
        check_finite_mat("A", &a)?;
        check_finite_vec("b", &b)?;

        let asymmetry = (&hessian - hessian.transpose()).amax();
        if asymmetry > T::lit(SYMMETRY_TOL) {
            log::warn!("Q is not symmetric (max |Q - Q^T| = {asymmetry}); using (Q + Q^T)/2");
        }
        let hessian = (&hessian + hessian.transpose()) * T::lit(0.5);
        Ok(Self {
            hessian,
            linear,
            a,
            b,
            bounds,
            asymmetry,
        })
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn hessian(&self) -> &DMatrix<T> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<T> {
        &self.linear
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DVector<T> {
        &self.b
    }

    pub fn bounds(&self) -> &BoxBounds<T> {
        &self.bounds
    }

    /// max |Q - Q^T| of the matrix as supplied, before symmetrization.
    pub fn asymmetry(&self) -> T {
        self.asymmetry
    }

    pub fn objective(&self, y: &DVector<T>) -> T {
        self.linear.dot(y) + (y.transpose() * &self.hessian * y)[(0, 0)] * T::lit(0.5)
    }

    /// Same problem with a different linear cost.
    pub fn with_linear(&self, linear: DVector<T>) -> Result<Self> {
        Self::new(
            self.hessian.clone(),
            linear,
            self.a.clone(),
            self.b.clone(),
            self.bounds.clone(),
        )
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Real>(&self) -> QpProblem<U> {
        let conv = |x: T| U::lit(x.as_f64());
        QpProblem {
            hessian: self.hessian.map(conv),
            linear: self.linear.map(conv),
            a: self.a.map(conv),
            b: self.b.map(conv),
            bounds: BoxBounds {
                lower: self.bounds.lower.map(conv),
                upper: self.bounds.upper.map(conv),
            },
            asymmetry: conv(self.asymmetry),
        }
    }
}

/// Primal-dual point `(y*, xi*, lambda*)` with unscaled bound multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint<T: Real> {
    pub y: DVector<T>,
    pub xi: DVector<T>,
    pub lambda: DVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// ‖Qy + A'xi - lambda + q‖
    pub stationarity: f64,
    /// ‖Ay - b‖
    pub equality: f64,
    /// Largest excursion of y outside the box.
    pub box_violation: f64,
}

impl<T: Real> KktPoint<T> {
    pub fn residuals(&self, problem: &QpProblem<T>) -> KktResiduals {
        let stat = problem.hessian() * &self.y + problem.a().transpose() * &self.xi - &self.lambda
            + problem.linear();
        let eq = problem.a() * &self.y - problem.b();
        KktResiduals {
            stationarity: stat.norm().as_f64(),
            equality: eq.norm().as_f64(),
            box_violation: problem.bounds().violation(&self.y).as_f64(),
        }
    }

    /// All KKT conditions, complementarity included, at absolute tolerance `tol`.
    pub fn satisfies(&self, problem: &QpProblem<T>, tol: T) -> bool {
        let r = self.residuals(problem);
        let t = tol.as_f64();
        r.stationarity <= t
            && r.equality <= t
            && r.box_violation <= t
            && prox::check_vi(&self.y, &self.lambda, problem.bounds(), tol)
    }
}

/// Outcome of checking the modelling assumptions on a problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub m: usize,
    pub a_rank: usize,
    pub full_row_rank: bool,
    pub q_asymmetry: f64,
    pub q_symmetric: bool,
    /// Coordinates with `lower_i >= upper_i`.
    pub bound_violations: Vec<usize>,
    /// Smallest eigenvalue of Z'QZ; `None` when A is rank deficient.
    pub reduced_hessian_min_eig: Option<f64>,
    pub reduced_hessian_pd: Option<bool>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.full_row_rank
            && self.bound_violations.is_empty()
            && self.reduced_hessian_pd == Some(true)
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.full_row_rank {
            out.push(format!("A has rank {} < m = {}", self.a_rank, self.m));
        }
        if !self.q_symmetric {
            out.push(format!("Q asymmetry {:e} (symmetrized)", self.q_asymmetry));
        }
        for &i in &self.bound_violations {
            out.push(format!("lower[{i}] is not below upper[{i}]"));
        }
        if self.reduced_hessian_pd == Some(false) {
            out.push(format!(
                "reduced Hessian not positive definite (min eigenvalue {:e})",
                self.reduced_hessian_min_eig.unwrap_or(f64::NAN)
            ));
        }
        out
    }
}

/// Checks full row rank of A, symmetry of Q, `lower < upper`, and Z'QZ > 0.
/// Asymmetry is reported but does not fail the report, since Q was symmetrized.
pub fn validate<T: Real>(problem: &QpProblem<T>) -> ValidationReport {
    let rank = subspace::numerical_rank(problem.a());
    let full_row_rank = rank == problem.m();
    let (min_eig, pd) = if full_row_rank {
        match subspace::null_range_basis(problem.a()) {
            Ok((_, z)) => {
                let eigs = subspace::reduced_hessian_eigs(problem.hessian(), &z);
                let min = eigs.first().copied();
                let pd = match min {
                    Some(v) => v > subspace::pd_threshold(problem.hessian()),
                    // n = m: the null space is trivial and the reduced Hessian is empty.
                    None => true,
                };
                (min.map(|v| v.as_f64()), Some(pd))
            }
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    ValidationReport {
        n: problem.n(),
        m: problem.m(),
        a_rank: rank,
        full_row_rank,
        q_asymmetry: problem.asymmetry().as_f64(),
        q_symmetric: problem.asymmetry() <= T::lit(SYMMETRY_TOL),
        bound_violations: problem.bounds().ordering_violations(),
        reduced_hessian_min_eig: min_eig,
        reduced_hessian_pd: pd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn qpex1_passes_all_assumptions() {
        let p = builtin::qpex1::<f64>();
        let r = validate(&p);
        assert!(r.passed(), "{:?}", r.failures());
        assert_eq!((r.n, r.m, r.a_rank), (2, 1, 1));
    }

    #[test]
    fn duplicated_row_flags_rank() {
        let p = QpProblem::new(
            DMatrix::<f64>::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_vec(vec![1.0, 2.0]),
            BoxBounds::nonnegative(2),
        )
        .unwrap();
        let r = validate(&p);
        assert!(!r.full_row_rank);
        assert_eq!(r.a_rank, 1);
        assert!(!r.passed());
        assert_eq!(r.reduced_hessian_pd, None);
    }

    #[test]
    fn bound_ordering_flagged_per_coordinate() {
        let bounds = BoxBounds::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        let p = QpProblem::new(
            DMatrix::<f64>::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            bounds,
        )
        .unwrap();
        let r = validate(&p);
        assert_eq!(r.bound_violations, vec![0]);
        assert!(!r.passed());
    }

    #[test]
    fn validate_is_pure() {
        let p = builtin::qpex2::<f64>(10.0, 1.0);
        assert_eq!(validate(&p), validate(&p));
    }

    #[test]
    fn asymmetric_hessian_is_symmetrized_and_reported() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        let p = QpProblem::new(
            q,
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            BoxBounds::unbounded(2),
        )
        .unwrap();
        assert_eq!(p.hessian()[(0, 1)], 0.5);
        assert_eq!(p.hessian()[(1, 0)], 0.5);
        let r = validate(&p);
        assert!(!r.q_symmetric);
        assert!(r.passed());
    }

    #[test]
    fn nan_entry_names_field() {
        let mut q = DMatrix::<f64>::identity(2, 2);
        q[(0, 1)] = f64::NAN;
        let err = QpProblem::new(
            q,
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            BoxBounds::unbounded(2),
        )
        .unwrap_err();
        assert!(err.to_string().contains("Q[0][1]"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let err = QpProblem::new(
            DMatrix::<f64>::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(1, 3),
            DVector::zeros(1),
            BoxBounds::unbounded(2),
        )
        .unwrap_err();
        assert!(matches!(err, QpError::Dimension { .. }));
    }

    #[test]
    fn zero_reduced_hessian_is_not_pd() {
        let p = QpProblem::new(
            DMatrix::<f64>::zeros(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            BoxBounds::nonnegative(2),
        )
        .unwrap();
        assert_eq!(validate(&p).reduced_hessian_pd, Some(false));
    }
}
