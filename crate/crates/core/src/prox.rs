//! Projection and reflection onto boxes.

use nalgebra::DVector;

use crate::problem::BoxBounds;
use crate::scalar::Real;

/// Default tolerance for [`check_vi`].
pub const VI_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult<T: Real> {
    pub w: DVector<T>,
    /// `w - v`
    pub lambda: DVector<T>,
}

fn clamp<T: Real>(x: T, lo: T, hi: T) -> T {
    // Comparisons only: no arithmetic on the infinite bounds.
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

pub fn project_box<T: Real>(v: &DVector<T>, bounds: &BoxBounds<T>) -> ProjectionResult<T> {
    let w = DVector::from_fn(v.len(), |i, _| {
        clamp(v[i], bounds.lower()[i], bounds.upper()[i])
    });
    let lambda = &w - v;
    ProjectionResult { w, lambda }
}

pub fn project<T: Real>(v: &DVector<T>, bounds: &BoxBounds<T>) -> DVector<T> {
    DVector::from_fn(v.len(), |i, _| {
        clamp(v[i], bounds.lower()[i], bounds.upper()[i])
    })
}

/// `(2P - I)(v)`
pub fn reflect_box<T: Real>(v: &DVector<T>, bounds: &BoxBounds<T>) -> DVector<T> {
    project(v, bounds) * T::lit(2.0) - v
}

/// `w ∈ box` and `lambda ⊥ w`: nonnegative on the lower face, nonpositive on
/// the upper face, zero in the interior, everything to `tol`.
pub fn check_vi<T: Real>(w: &DVector<T>, lambda: &DVector<T>, bounds: &BoxBounds<T>, tol: T) -> bool {
    if w.len() != bounds.dim() || lambda.len() != bounds.dim() {
        return false;
    }
    if !bounds.contains(w, tol) {
        return false;
    }
    (0..w.len()).all(|i| {
        let (lo, hi) = (bounds.lower()[i], bounds.upper()[i]);
        let at_lo = lo.is_finite() && (w[i] - lo).abs() <= tol;
        let at_hi = hi.is_finite() && (hi - w[i]).abs() <= tol;
        match (at_lo, at_hi) {
            (true, true) => true,
            (true, false) => lambda[i] >= -tol,
            (false, true) => lambda[i] <= tol,
            (false, false) => lambda[i].abs() <= tol,
        }
    })
}
