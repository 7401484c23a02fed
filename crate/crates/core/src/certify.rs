//! Infeasibility certificates: the closest pair between `{Ay = b}` and the
//! box, the objective-dependent shift, and checks on the limit of a run.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Result;
use crate::oracle;
use crate::problem::{BoxBounds, QpProblem};
use crate::prox::project;
use crate::scalar::Real;
use crate::subspace::null_range_basis;

pub const AP_TOL: f64 = 1e-10;
pub const AP_MAX_ITER: usize = 1_000_000;

/// Closest points `y°` (on `{Ay = b}`) and `w°` (in the box).
#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer<T: Real> {
    pub y: DVector<T>,
    pub w: DVector<T>,
    /// `‖y° - w°‖`; zero when the problem is feasible.
    pub distance: T,
    pub iterations: usize,
}

/// `R(AR)^{-1}b`, the particular solution of `Ay = b` in range(A').
pub fn particular_solution<T: Real>(problem: &QpProblem<T>, r: &DMatrix<T>) -> DVector<T> {
    if problem.m() == 0 {
        return DVector::zeros(problem.n());
    }
    let ar = problem.a() * r;
    let coef = ar.lu().solve(problem.b()).expect("AR is invertible for full row rank A");
    r * coef
}

/// Alternating projections from `y_p = R(AR)^{-1}b`.
pub fn infeasibility_minimizer<T: Real>(problem: &QpProblem<T>) -> Result<Minimizer<T>> {
    let (r, z) = null_range_basis(problem.a())?;
    let yp = particular_solution(problem, &r);
    Ok(alternate(&r, &z, &yp, problem.bounds()))
}

/// Alternating projections from a caller-supplied solution of `Ay = b`.
pub fn infeasibility_minimizer_from<T: Real>(problem: &QpProblem<T>, y_p: &DVector<T>) -> Result<Minimizer<T>> {
    let (r, z) = null_range_basis(problem.a())?;
    Ok(alternate(&r, &z, y_p, problem.bounds()))
}

fn alternate<T: Real>(r: &DMatrix<T>, z: &DMatrix<T>, yp: &DVector<T>, bounds: &BoxBounds<T>) -> Minimizer<T> {
    let rrt = r * r.transpose();
    let mut w = project(yp, bounds);
    let mut y = &w + &rrt * (yp - &w);
    let mut iterations = 0;
    while iterations < AP_MAX_ITER {
        iterations += 1;
        let w_next = project(&y, bounds);
        let y_next = &w_next + &rrt * (yp - &w_next);
        let step = (&w_next - &w).norm().max((&y_next - &y).norm());
        w = w_next;
        y = y_next;
        if step <= T::lit(AP_TOL) {
            break;
        }
    }
    if iterations == AP_MAX_ITER {
        log::warn!("alternating projections hit the {AP_MAX_ITER} iteration cap");
    }
    let distance = (&y - &w).norm();
    if let Some((py, pw)) = polish(z, &y, bounds) {
        let pd = (&py - &pw).norm();
        if pd <= distance + T::lit(1e-12) * (T::one() + distance) {
            return Minimizer { y: py, w: pw, distance: pd, iterations };
        }
    }
    Minimizer { y, w, distance, iterations }
}

/// Exact minimizer on the face found by the projections: with the clipped
/// coordinates `S` held at their bounds `c`, minimize `‖y_S - c‖` over
/// `y = y_ap + Zt`, taking the smallest correction `t`. `None` if the face
/// changes.
fn polish<T: Real>(z: &DMatrix<T>, y: &DVector<T>, bounds: &BoxBounds<T>) -> Option<(DVector<T>, DVector<T>)> {
    let w = project(y, bounds);
    let clipped: Vec<usize> = (0..y.len()).filter(|&i| w[i] != y[i]).collect();
    if clipped.is_empty() || z.ncols() == 0 {
        return None;
    }
    let ez = DMatrix::from_fn(clipped.len(), z.ncols(), |r, c| z[(clipped[r], c)]);
    let rhs = DVector::from_fn(clipped.len(), |r, _| w[clipped[r]] - y[clipped[r]]);
    let svd = ez.svd(true, true);
    let eps = svd.singular_values.max() * T::lit(1e-12);
    let t = svd.solve(&rhs, eps).ok()?;
    let py = y + z * t;
    let pw = project(&py, bounds);
    let same_face = (0..y.len()).all(|i| (pw[i] != py[i]) == clipped.contains(&i));
    same_face.then_some((py, pw))
}

/// `(y^Q, λ^Q)`: `y^Q = Zz*` for `z*` solving
///
/// ```text
/// min ½ z'(Z'QZ)z + (Z'q + Z'Qy°)'z   s.t.  w° + Zz ∈ box
/// ```
///
/// and `λ^Q` the bound multipliers of that problem in n-space. Solved by the
/// enumeration oracle in the variable `x = w° + Zz`.
pub fn objective_shift<T: Real>(
    problem: &QpProblem<T>,
    y_circ: &DVector<T>,
    w_circ: &DVector<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    let n = problem.n();
    let (r, z) = null_range_basis(problem.a())?;
    if z.ncols() == 0 {
        return Ok((DVector::zeros(n), DVector::zeros(n)));
    }
    let zzt = &z * z.transpose();
    let q2 = &zzt * problem.hessian() * &zzt;
    let g = z.transpose() * (problem.linear() + problem.hessian() * y_circ);
    let lin = &z * g - &q2 * w_circ;
    let a2 = r.transpose();
    let b2 = &a2 * w_circ;
    let shifted = QpProblem::new(q2, lin, a2, b2, problem.bounds().clone())?;
    let kkt = oracle::enumerate_kkt(&shifted)?;
    let mut y_q = &kkt.y - w_circ;
    // Drop the round-off that leaks into range(R).
    y_q = &zzt * y_q;
    Ok((y_q, kkt.lambda))
}

/// One pass/fail line of a [`VerificationReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitCheck {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// Set when the certificate describes a feasible problem; the checks are
    /// then meaningless and the report fails.
    pub feasible_input: bool,
    pub checks: Vec<LimitCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        !self.feasible_input && self.checks.iter().all(|c| c.passed)
    }
}

/// Final iterate of a run, as needed by [`verify_limit`].
#[derive(Debug, Clone, PartialEq)]
pub struct LimitWindow<T: Real> {
    pub y: DVector<T>,
    pub w: DVector<T>,
    /// Scaled multiplier `λ^k`.
    pub lambda: DVector<T>,
    /// `λ^k - λ^{k-1}`
    pub delta_lambda: DVector<T>,
    pub beta: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate<T: Real> {
    pub y_circ: DVector<T>,
    pub w_circ: DVector<T>,
    /// `w° - y°`
    pub lambda_circ: DVector<T>,
    /// `None` when the problem is too large for the enumeration oracle.
    pub y_q: Option<DVector<T>>,
    pub lambda_q: Option<DVector<T>>,
    pub distance: T,
    /// Median of `‖v^{k+1} - v^k‖` over the last iterations of the run.
    pub omega: Option<T>,
    /// `⟨Δλ, λ°⟩/‖λ°‖²` at the last iterate; tends to 1.
    pub drift: Option<T>,
    pub checks: Option<VerificationReport>,
}

#[derive(Serialize)]
struct CertificateJson<'a> {
    y_circ: Vec<f64>,
    w_circ: Vec<f64>,
    lambda_circ: Vec<f64>,
    y_q: Option<Vec<f64>>,
    lambda_q: Option<Vec<f64>>,
    distance: f64,
    omega: Option<f64>,
    drift: Option<f64>,
    checks: Option<&'a VerificationReport>,
}

fn to_vec<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

impl<T: Real> InfeasibilityCertificate<T> {
    /// Minimizer and shift only; the run-dependent fields stay empty.
    pub fn compute(problem: &QpProblem<T>) -> Result<Self> {
        let mini = infeasibility_minimizer(problem)?;
        let (y_q, lambda_q) = if problem.n() <= oracle::MAX_ORACLE_DIM {
            let (a, b) = objective_shift(problem, &mini.y, &mini.w)?;
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        Ok(Self {
            lambda_circ: &mini.w - &mini.y,
            y_circ: mini.y,
            w_circ: mini.w,
            y_q,
            lambda_q,
            distance: mini.distance,
            omega: None,
            drift: None,
            checks: None,
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.distance <= T::lit(oracle::INFEASIBLE_DISTANCE)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CertificateJson {
            y_circ: to_vec(&self.y_circ),
            w_circ: to_vec(&self.w_circ),
            lambda_circ: to_vec(&self.lambda_circ),
            y_q: self.y_q.as_ref().map(to_vec),
            lambda_q: self.lambda_q.as_ref().map(to_vec),
            distance: self.distance.as_f64(),
            omega: self.omega.map(|x| x.as_f64()),
            drift: self.drift.map(|x| x.as_f64()),
            checks: self.checks.as_ref(),
        })
        .expect("certificate serializes")
    }
}

/// `⟨Δλ, λ°⟩/‖λ°‖²`.
pub fn drift<T: Real>(delta_lambda: &DVector<T>, lambda_circ: &DVector<T>) -> Option<T> {
    let d = lambda_circ.norm_squared();
    (d > T::zero()).then(|| delta_lambda.dot(lambda_circ) / d)
}

/// Compares the last iterate of a run with the limits predicted by the
/// certificate, with `tol_v = 1e-4(1 + ‖y°‖)`.
pub fn verify_limit<T: Real>(
    window: &LimitWindow<T>,
    cert: &InfeasibilityCertificate<T>,
    z: &DMatrix<T>,
    eps_a: T,
) -> VerificationReport {
    let tol_v = 1e-4 * (1.0 + cert.y_circ.norm().as_f64());
    let mut checks = Vec::new();
    let mut push = |name: &'static str, value: f64, tol: f64, passed: bool| {
        checks.push(LimitCheck { name, value, tol, passed });
    };
    let n = cert.y_circ.len();
    let zero = DVector::zeros(n);
    let y_q = cert.y_q.as_ref().unwrap_or(&zero);

    let dy = (&window.y - (&cert.y_circ + y_q)).norm().as_f64();
    push("y_limit", dy, tol_v, dy <= tol_v);
    let dw = (&window.w - (&cert.w_circ + y_q)).norm().as_f64();
    push("w_limit", dw, tol_v, dw <= tol_v);
    let dl = (&window.delta_lambda - &cert.lambda_circ).norm().as_f64();
    push("delta_lambda_limit", dl, tol_v, dl <= tol_v);
    if let Some(lq) = &cert.lambda_q {
        let zl = (z.transpose() * (&window.lambda * window.beta - lq)).norm().as_f64();
        push("null_space_multiplier", zl, tol_v, zl <= tol_v);
    }
    let gap = &window.w - &window.y;
    let (nl, ng) = (window.lambda.norm(), gap.norm());
    let cos = if nl.as_f64() < 1e-14 || ng.as_f64() < 1e-14 {
        f64::NAN
    } else {
        (window.lambda.dot(&gap) / (nl * ng)).as_f64()
    };
    let thr = 1.0 - eps_a.as_f64();
    push("alignment", cos, thr, cos >= thr);

    VerificationReport {
        feasible_input: cert.is_feasible(),
        checks,
    }
}
