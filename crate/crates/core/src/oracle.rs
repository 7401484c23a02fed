//! Brute-force KKT enumeration for tiny problems.
//!
//! Every coordinate is tried free, at its lower bound and at its upper bound
//! (infinite bounds skipped), in lexicographic order with coordinate 0 most
//! significant and free < lower < upper. The first assignment whose linear
//! KKT system is nonsingular and whose solution is primal feasible with
//! correctly signed multipliers is returned.

use nalgebra::{DMatrix, DVector, SVD};

use crate::certify;
use crate::error::{QpError, Result};
use crate::problem::{KktPoint, QpProblem};
use crate::scalar::Real;

pub const MAX_ORACLE_DIM: usize = 12;

/// Sets closer than this are treated as intersecting.
pub const INFEASIBLE_DISTANCE: f64 = 1e-8;

const ACCEPT_TOL: f64 = 1e-10;
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T: Real> {
    pub status: OracleStatus,
    pub kkt: Option<KktPoint<T>>,
    /// Coordinates of `y*` on a bound.
    pub active_set: Vec<usize>,
    /// `[A; E*']` has full row rank.
    pub licq: bool,
    /// Distance between `{Ay = b}` and the box.
    pub distance: T,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Free,
    Lower,
    Upper,
}

fn try_assignment<T: Real>(problem: &QpProblem<T>, slots: &[Slot]) -> Option<KktPoint<T>> {
    let (n, m) = (problem.n(), problem.m());
    let fixed: Vec<usize> = (0..n).filter(|&i| slots[i] != Slot::Free).collect();
    let p = fixed.len();
    let dim = n + m + p;
    let mut k = DMatrix::<T>::zeros(dim, dim);
    let mut rhs = DVector::<T>::zeros(dim);
    k.view_mut((0, 0), (n, n)).copy_from(problem.hessian());
    k.view_mut((0, n), (n, m)).copy_from(&problem.a().transpose());
    k.view_mut((n, 0), (m, n)).copy_from(problem.a());
    rhs.rows_mut(0, n).copy_from(&(-problem.linear()));
    rhs.rows_mut(n, m).copy_from(problem.b());
    let (lo, hi) = (problem.bounds().lower(), problem.bounds().upper());
    for (j, &i) in fixed.iter().enumerate() {
        k[(i, n + m + j)] = -T::one();
        k[(n + m + j, i)] = T::one();
        rhs[n + m + j] = if slots[i] == Slot::Lower { lo[i] } else { hi[i] };
    }

    let svd = SVD::new(k.clone(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > T::zero()) || smin <= smax * T::lit(SINGULAR_RATIO) {
        return None;
    }
    let mut x = svd.solve(&rhs, T::zero()).ok()?;
    // One step of iterative refinement.
    let resid = &rhs - &k * &x;
    x += svd.solve(&resid, T::zero()).ok()?;
    let y = x.rows(0, n).into_owned();
    let xi = x.rows(n, m).into_owned();
    let tol = T::lit(ACCEPT_TOL) * (T::one() + x.amax());
    if !problem.bounds().contains(&y, tol) {
        return None;
    }
    let mut lambda = DVector::zeros(n);
    for (j, &i) in fixed.iter().enumerate() {
        let mu = x[n + m + j];
        let ok = match slots[i] {
            Slot::Lower => mu >= -tol,
            Slot::Upper => mu <= tol,
            Slot::Free => true,
        };
        if !ok {
            return None;
        }
        lambda[i] = mu;
    }
    Some(KktPoint { y, xi, lambda })
}

/// First KKT point in enumeration order, without the feasibility pre-check.
pub fn enumerate_kkt<T: Real>(problem: &QpProblem<T>) -> Result<KktPoint<T>> {
    let n = problem.n();
    if n > MAX_ORACLE_DIM {
        return Err(QpError::OracleTooLarge { n, max: MAX_ORACLE_DIM });
    }
    let (lo, hi) = (problem.bounds().lower(), problem.bounds().upper());
    let total = 3usize.pow(n as u32);
    let mut slots = vec![Slot::Free; n];
    'outer: for code in 0..total {
        let mut c = code;
        for i in (0..n).rev() {
            slots[i] = match c % 3 {
                0 => Slot::Free,
                1 => Slot::Lower,
                _ => Slot::Upper,
            };
            c /= 3;
            if (slots[i] == Slot::Lower && !lo[i].is_finite()) || (slots[i] == Slot::Upper && !hi[i].is_finite()) {
                continue 'outer;
            }
        }
        if let Some(kkt) = try_assignment(problem, &slots) {
            return Ok(kkt);
        }
    }
    Err(QpError::OracleNoKktPoint)
}

fn licq_holds<T: Real>(problem: &QpProblem<T>, active: &[usize]) -> bool {
    let (n, m) = (problem.n(), problem.m());
    let rows = m + active.len();
    if rows > n {
        return false;
    }
    if rows == 0 {
        return true;
    }
    let mut g = DMatrix::<T>::zeros(rows, n);
    g.rows_mut(0, m).copy_from(problem.a());
    for (j, &i) in active.iter().enumerate() {
        g[(m + j, i)] = T::one();
    }
    crate::subspace::numerical_rank(&g) == rows
}

/// Reference solve: infeasibility check by alternating projections, then
/// KKT enumeration.
pub fn oracle_solve<T: Real>(problem: &QpProblem<T>) -> Result<OracleResult<T>> {
    if problem.n() > MAX_ORACLE_DIM {
        return Err(QpError::OracleTooLarge { n: problem.n(), max: MAX_ORACLE_DIM });
    }
    let mini = certify::infeasibility_minimizer(problem)?;
    if mini.distance > T::lit(INFEASIBLE_DISTANCE) {
        return Ok(OracleResult {
            status: OracleStatus::Infeasible,
            kkt: None,
            active_set: Vec::new(),
            licq: false,
            distance: mini.distance,
        });
    }
    let kkt = enumerate_kkt(problem)?;
    let tol = T::lit(1e-9) * (T::one() + kkt.y.amax());
    let active_set: Vec<usize> = (0..problem.n())
        .filter(|&i| problem.bounds().at_bound(i, kkt.y[i], tol))
        .collect();
    let licq = licq_holds(problem, &active_set);
    Ok(OracleResult {
        status: OracleStatus::Optimal,
        kkt: Some(kkt),
        active_set,
        licq,
        distance: mini.distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use approx::assert_relative_eq;

    #[test]
    fn qpex1_reference() {
        let r = oracle_solve(&builtin::qpex1::<f64>()).unwrap();
        assert_eq!(r.status, OracleStatus::Optimal);
        let kkt = r.kkt.unwrap();
        assert_relative_eq!(kkt.y, DVector::from_vec(vec![0.0, 1.0]), epsilon = 1e-12);
        assert_relative_eq!(kkt.lambda, DVector::from_vec(vec![2.0, 0.0]), epsilon = 1e-12);
        assert_eq!(r.active_set, vec![0]);
        assert!(r.licq);
    }

    #[test]
    fn nonstrict_has_zero_multiplier() {
        let r = oracle_solve(&builtin::nonstrict::<f64>(1.0, 1.0)).unwrap();
        let kkt = r.kkt.unwrap();
        assert_relative_eq!(kkt.y, DVector::from_vec(vec![0.0, 1.0]), epsilon = 1e-12);
        assert_relative_eq!(kkt.lambda, DVector::zeros(2), epsilon = 1e-12);
        assert_eq!(r.active_set, vec![0]);
    }

    #[test]
    fn qpex2_reference() {
        for (k1, k2) in [(1.0, 10.0), (10.0, 1.0), (1.0, 100.0)] {
            let kkt = oracle_solve(&builtin::qpex2::<f64>(k1, k2)).unwrap().kkt.unwrap();
            assert_relative_eq!(kkt.y, DVector::from_vec(vec![0.0, 1.0 / k2]), epsilon = 1e-12);
            assert_relative_eq!(kkt.lambda, DVector::from_vec(vec![2.0 * k1, 0.0]), epsilon = 1e-9);
        }
    }

    #[test]
    fn qpex3_is_infeasible() {
        let r = oracle_solve(&builtin::qpex3::<f64>()).unwrap();
        assert_eq!(r.status, OracleStatus::Infeasible);
        assert_relative_eq!(r.distance, 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn refuses_large_problems() {
        let p = builtin::random_feasible::<f64>(1, 13, 1);
        assert!(matches!(oracle_solve(&p), Err(QpError::OracleTooLarge { n: 13, .. })));
    }

    #[test]
    fn random_references_satisfy_kkt() {
        for seed in 0..30 {
            let p = builtin::random_feasible::<f64>(seed, 2 + seed as usize % 5, seed as usize % 3);
            let r = oracle_solve(&p).unwrap();
            let kkt = r.kkt.unwrap();
            assert!(kkt.satisfies(&p, 1e-9), "seed {seed}: {:?}", kkt.residuals(&p));
        }
    }

    #[test]
    fn deterministic() {
        let p = builtin::random_feasible::<f64>(5, 6, 2);
        assert_eq!(oracle_solve(&p).unwrap(), oracle_solve(&p).unwrap());
    }
}
