//! Orthonormal range/null bases of `A` and the operators the iteration is built from.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use crate::error::{QpError, Result};
use crate::problem::QpProblem;
use crate::scalar::Real;

/// Entries below this magnitude are skipped when fixing basis column signs.
const SIGN_TOL: f64 = 1e-10;

fn sorted_svd<T: Real>(a: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let (m, n) = a.shape();
    // Pad to square so that V^T carries a full basis of R^n, not the thin one.
    let mut square = DMatrix::zeros(n.max(m), n);
    square.rows_mut(0, m).copy_from(a);
    let svd = SVD::new(square, false, true);
    let v_t = svd.v_t.expect("SVD computed with V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(n, order.len());
    for (col, &i) in order.iter().enumerate() {
        v.set_column(col, &v_t.row(i).transpose());
    }
    (sigma, v)
}

/// Rank as the count of singular values above `n * eps * sigma_max`.
pub fn numerical_rank<T: Real>(a: &DMatrix<T>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let (sigma, _) = sorted_svd(a);
    let smax = sigma[0];
    if smax <= T::zero() {
        return 0;
    }
    let tol = T::lit(a.ncols() as f64) * T::machine_epsilon() * smax;
    sigma.iter().filter(|&&s| s > tol).count()
}

fn fix_signs<T: Real>(basis: &mut DMatrix<T>) {
    for mut col in basis.column_iter_mut() {
        if let Some(&first) = col.iter().find(|x| x.abs() > T::lit(SIGN_TOL)) {
            if first < T::zero() {
                col.neg_mut();
            }
        }
    }
}

/// Orthonormal bases `R` (n×m) of range(A') and `Z` (n×(n-m)) of null(A).
///
/// Columns are sign-normalized so that the first entry above 1e-10 in
/// magnitude is positive.
pub fn null_range_basis<T: Real>(a: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let (m, n) = a.shape();
    if m == 0 {
        return Ok((DMatrix::zeros(n, 0), DMatrix::identity(n, n)));
    }
    let rank = numerical_rank(a);
    if rank < m {
        return Err(QpError::RankDeficient { rank, rows: m });
    }
    let (_, v) = sorted_svd(a);
    let mut r = v.columns(0, m).into_owned();
    let mut z = v.columns(m, n - m).into_owned();
    fix_signs(&mut r);
    fix_signs(&mut z);
    Ok((r, z))
}

/// Eigenvalues of `Z'QZ`, ascending.
pub fn reduced_hessian_eigs<T: Real>(hessian: &DMatrix<T>, z: &DMatrix<T>) -> Vec<T> {
    if z.ncols() == 0 {
        return Vec::new();
    }
    let h = z.transpose() * hessian * z;
    let h = (&h + h.transpose()) * T::lit(0.5);
    let mut eigs: Vec<T> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    eigs
}

/// Eigenvalues at or below this are treated as non-positive.
pub fn pd_threshold<T: Real>(hessian: &DMatrix<T>) -> T {
    T::lit(hessian.nrows() as f64) * T::machine_epsilon() * (T::one() + hessian.amax())
}

/// `R`, `Z` and the operators `M`, `N`, `M_Z` for one value of beta.
///
/// ```text
/// M   = Z (Z'(Q/β + I)Z)^{-1} Z'
/// N   = (I - M Q/β) R (AR)^{-1}
/// M_Z = 2 (Z'QZ/β + I)^{-1} - I
/// ```
#[derive(Debug, Clone)]
pub struct OperatorBundle<T: Real> {
    pub r: DMatrix<T>,
    pub z: DMatrix<T>,
    pub beta: T,
    pub m: DMatrix<T>,
    pub n: DMatrix<T>,
    pub mz: DMatrix<T>,
    /// Eigenvalues of `Z'QZ`, ascending.
    pub reduced_eigs: Vec<T>,
    /// Spectral norm of `M_Z`.
    pub mz_norm: T,
    /// Cholesky factor of `Z'(Q/β + I)Z`.
    factor: Option<Cholesky<T, Dyn>>,
    /// `M q / β`
    m_q: DVector<T>,
    /// `N b`
    n_b: DVector<T>,
}

impl<T: Real> OperatorBundle<T> {
    /// `M x` through the cached factorization.
    pub fn apply_m(&self, x: &DVector<T>) -> DVector<T> {
        match &self.factor {
            Some(f) => &self.z * f.solve(&(self.z.transpose() * x)),
            None => DVector::zeros(x.len()),
        }
    }

    /// The affine part `-M q/β + N b` shared by every step.
    pub fn offset(&self) -> DVector<T> {
        &self.n_b - &self.m_q
    }

    pub fn m_q(&self) -> &DVector<T> {
        &self.m_q
    }

    pub fn n_b(&self) -> &DVector<T> {
        &self.n_b
    }

    pub fn null_dim(&self) -> usize {
        self.z.ncols()
    }
}

pub fn build_operators<T: Real>(problem: &QpProblem<T>, beta: T) -> Result<OperatorBundle<T>> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(QpError::InvalidBeta(beta.as_f64()));
    }
    let n = problem.n();
    let (r, z) = null_range_basis(problem.a())?;
    let q_mat = problem.hessian();
    let reduced_eigs = reduced_hessian_eigs(q_mat, &z);
    if let Some(&min) = reduced_eigs.first() {
        if min <= pd_threshold(q_mat) {
            return Err(QpError::ReducedHessianNotPd { min_eig: min.as_f64() });
        }
    }

    let k = z.ncols();
    let (factor, m_op, mz) = if k > 0 {
        let kmat = z.transpose() * (q_mat / beta + DMatrix::identity(n, n)) * &z;
        let kmat = (&kmat + kmat.transpose()) * T::lit(0.5);
        let chol = Cholesky::new(kmat).ok_or(QpError::ReducedHessianNotPd {
            min_eig: reduced_eigs[0].as_f64(),
        })?;
        let m_op = &z * chol.solve(&z.transpose());
        let m_op = (&m_op + m_op.transpose()) * T::lit(0.5);
        let mz = chol.inverse() * T::lit(2.0) - DMatrix::identity(k, k);
        let mz = (&mz + mz.transpose()) * T::lit(0.5);
        (Some(chol), m_op, mz)
    } else {
        (None, DMatrix::zeros(n, n), DMatrix::zeros(0, 0))
    };

    let mz_norm = if k > 0 {
        SymmetricEigen::new(mz.clone())
            .eigenvalues
            .iter()
            .fold(T::zero(), |acc, e| acc.max(e.abs()))
    } else {
        T::zero()
    };

    let n_op = if problem.m() > 0 {
        let ar = problem.a() * &r;
        let ar_inv = ar.lu().try_inverse().ok_or(QpError::RankDeficient {
            rank: 0,
            rows: problem.m(),
        })?;
        (DMatrix::identity(n, n) - &m_op * q_mat / beta) * &r * ar_inv
    } else {
        DMatrix::zeros(n, 0)
    };

    let m_q = &m_op * problem.linear() / beta;
    let n_b = &n_op * problem.b();
    Ok(OperatorBundle {
        r,
        z,
        beta,
        m: m_op,
        n: n_op,
        mz,
        reduced_eigs,
        mz_norm,
        factor,
        m_q,
        n_b,
    })
}

/// `sqrt(λ_min(Z'QZ) λ_max(Z'QZ))`, the beta minimizing ‖M_Z‖.
pub fn optimal_beta<T: Real>(problem: &QpProblem<T>) -> Result<T> {
    let (_, z) = null_range_basis(problem.a())?;
    let eigs = reduced_hessian_eigs(problem.hessian(), &z);
    let (Some(&lo), Some(&hi)) = (eigs.first(), eigs.last()) else {
        return Err(QpError::Analysis(
            "equality constraints fix y completely; no reduced Hessian to tune beta against".into(),
        ));
    };
    if lo <= pd_threshold(problem.hessian()) {
        return Err(QpError::ReducedHessianNotPd { min_eig: lo.as_f64() });
    }
    Ok((lo * hi).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::problem::BoxBounds;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identities_hold(a: &DMatrix<f64>, tol: f64) {
        let (m, n) = a.shape();
        let (r, z) = null_range_basis(a).unwrap();
        assert!((r.transpose() * &r - DMatrix::identity(m, m)).amax() < tol);
        assert!((z.transpose() * &z - DMatrix::identity(n - m, n - m)).amax() < tol);
        assert!((r.transpose() * &z).amax() < tol);
        assert!((&r * r.transpose() + &z * z.transpose() - DMatrix::identity(n, n)).amax() < tol);
        assert!((a * &z).amax() < tol * (1.0 + a.amax()));
    }

    #[test]
    fn single_row_bases() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (r, z) = null_range_basis(&a).unwrap();
        let s = 0.5f64.sqrt();
        assert_relative_eq!(r[(0, 0)], s, epsilon = 1e-14);
        assert_relative_eq!(r[(1, 0)], s, epsilon = 1e-14);
        assert_relative_eq!(z[(0, 0)], s, epsilon = 1e-14);
        assert_relative_eq!(z[(1, 0)], -s, epsilon = 1e-14);
    }

    #[test]
    fn no_constraints_gives_identity_null_basis() {
        let (r, z) = null_range_basis(&DMatrix::<f64>::zeros(0, 3)).unwrap();
        assert_eq!(r.shape(), (3, 0));
        assert_eq!(z, DMatrix::identity(3, 3));
    }

    #[test]
    fn random_full_rank_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        identities_hold(&a, 1e-10);
    }

    #[test]
    fn rank_deficient_is_error() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            null_range_basis(&a),
            Err(QpError::RankDeficient { rank: 1, rows: 2 })
        ));
    }

    #[test]
    fn deterministic_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(null_range_basis(&a).unwrap(), null_range_basis(&a).unwrap());
    }

    #[test]
    fn qpex1_mz_is_zero_at_beta_one() {
        let b = build_operators(&builtin::qpex1::<f64>(), 1.0).unwrap();
        assert_eq!(b.reduced_eigs.len(), 1);
        assert_relative_eq!(b.reduced_eigs[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(b.mz[(0, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(b.mz_norm, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_reduced_hessian_rejected() {
        let p = QpProblem::new(
            DMatrix::<f64>::zeros(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            BoxBounds::nonnegative(2),
        )
        .unwrap();
        assert!(matches!(
            build_operators(&p, 1.0),
            Err(QpError::ReducedHessianNotPd { .. })
        ));
    }

    #[test]
    fn nonpositive_beta_rejected() {
        assert!(matches!(
            build_operators(&builtin::qpex1::<f64>(), 0.0),
            Err(QpError::InvalidBeta(_))
        ));
    }

    #[test]
    fn mz_matches_projected_m() {
        let p = builtin::random_feasible::<f64>(3, 7, 2);
        let b = build_operators(&p, 0.7).unwrap();
        let k = b.null_dim();
        let alt = b.z.transpose() * (&b.m * 2.0 - DMatrix::identity(7, 7)) * &b.z;
        assert!((alt - &b.mz).amax() < 1e-10);
        // M acts only on the null space.
        assert!((b.r.transpose() * &b.m).amax() < 1e-10);
        assert_eq!(b.mz.shape(), (k, k));
        let x = DVector::from_fn(7, |i, _| i as f64 - 3.0);
        assert!((b.apply_m(&x) - &b.m * &x).amax() < 1e-10);
    }

    #[test]
    fn optimal_beta_values() {
        assert_relative_eq!(optimal_beta(&builtin::qpex1::<f64>()).unwrap(), 1.0, epsilon = 1e-12);
        let b = optimal_beta(&builtin::qpex2::<f64>(10.0, 1.0)).unwrap();
        assert!((b - 1.98).abs() <= 0.005, "{b}");
        let p = QpProblem::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            BoxBounds::unbounded(2),
        )
        .unwrap();
        assert_relative_eq!(optimal_beta(&p).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let b = build_operators(&builtin::qpex1::<f32>(), 2.0).unwrap();
        // eig(Z'MZ) = β/(β+1) = 2/3, so M_Z = 1/3.
        assert!((b.mz_norm - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn random_seeded_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(0..=n);
            let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
            identities_hold(&a, 1e-10);
        }
    }
}
