//! The ADMM iteration, its Douglas-Rachford form, and the solve loop.
//!
//! ```text
//! y⁺ = M(w + λ - q/β) + N b
//! w⁺ = P(y⁺ - λ)
//! λ⁺ = λ + w⁺ - y⁺
//! ```

mod trace;

use std::collections::VecDeque;

use nalgebra::DVector;
use serde_json::json;

pub use trace::{detect_infeasibility, detector_conditions, DetectorConditions, DetectorTolerances, TraceRow};

use crate::certify::{self, InfeasibilityCertificate, LimitWindow};
use crate::error::{QpError, Result};
use crate::problem::{KktPoint, QpProblem};
use crate::prox::{project, reflect_box};
use crate::rate::RateContext;
use crate::scalar::Real;
use crate::subspace::{build_operators, optimal_beta, OperatorBundle};

/// Iterations before the infeasibility test is first evaluated.
pub const DETECT_WARMUP: usize = 100;
/// Stride of the infeasibility test after the warm-up.
pub const DETECT_EVERY: usize = 10;
/// Window for the median of `‖Δv‖`.
pub const OMEGA_WINDOW: usize = 10;

/// `(y, w, λ)` and the DR iterates `v = w - λ`, `u = w + λ`.
/// `λ` is scaled: the bound multiplier is `βλ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T: Real> {
    pub k: usize,
    pub y: DVector<T>,
    pub w: DVector<T>,
    pub lambda: DVector<T>,
    pub v: DVector<T>,
    pub u: DVector<T>,
}

impl<T: Real> AdmmState<T> {
    /// `w⁰` is projected into the box; `y⁰ = w⁰`.
    pub fn initial(problem: &QpProblem<T>, w0: Option<&DVector<T>>, lambda0: Option<&DVector<T>>) -> Result<Self> {
        let n = problem.n();
        for (name, v) in [("w0", w0), ("lambda0", lambda0)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(QpError::Dimension {
                        field: name.into(),
                        expected: n.to_string(),
                        found: v.len().to_string(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(QpError::InvalidEntry {
                        field: name.into(),
                        reason: "entries must be finite".into(),
                    });
                }
            }
        }
        let w = project(&w0.cloned().unwrap_or_else(|| DVector::zeros(n)), problem.bounds());
        let lambda = lambda0.cloned().unwrap_or_else(|| DVector::zeros(n));
        Ok(Self {
            k: 0,
            y: w.clone(),
            v: &w - &lambda,
            u: &w + &lambda,
            w,
            lambda,
        })
    }
}

/// One ADMM step, in the order y, w, λ.
pub fn admm_step<T: Real>(state: &AdmmState<T>, bundle: &OperatorBundle<T>, problem: &QpProblem<T>) -> AdmmState<T> {
    let y = bundle.apply_m(&(&state.w + &state.lambda)) + bundle.offset();
    let v = &y - &state.lambda;
    let w = project(&v, problem.bounds());
    let lambda = &state.lambda + &w - &y;
    let u = &w + &lambda;
    AdmmState {
        k: state.k + 1,
        y,
        w,
        lambda,
        v,
        u,
    }
}

/// `½((2M - I)R(v) + v) - Mq/β + Nb`
pub fn dr_step<T: Real>(v: &DVector<T>, bundle: &OperatorBundle<T>, problem: &QpProblem<T>) -> DVector<T> {
    let r = reflect_box(v, problem.bounds());
    let half = T::lit(0.5);
    bundle.apply_m(&r) - &r * half + v * half + bundle.offset()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaChoice<T: Real> {
    Fixed(T),
    /// `sqrt(λ_min λ_max)` of the reduced Hessian.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T: Real> {
    pub beta: BetaChoice<T>,
    pub eps_o: T,
    pub eps_r: T,
    pub eps_a: T,
    pub eps_v: T,
    pub max_iter: usize,
    /// Keep every `trace_every`-th row; 0 keeps none.
    pub trace_every: usize,
    pub w0: Option<DVector<T>>,
    /// Initial scaled multiplier.
    pub lambda0: Option<DVector<T>>,
    /// Reference solution; enables `dist_v`, `rate`, `active_subset` and `alpha`.
    pub reference: Option<KktPoint<T>>,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        let d = DetectorTolerances::default();
        Self {
            beta: BetaChoice::Auto,
            eps_o: T::lit(d.eps_o),
            eps_r: T::lit(d.eps_r),
            eps_a: T::lit(d.eps_a),
            eps_v: T::lit(d.eps_v),
            max_iter: 100_000,
            trace_every: 1,
            w0: None,
            lambda0: None,
            reference: None,
        }
    }
}

impl<T: Real> SolveOptions<T> {
    pub fn with_beta(beta: T) -> Self {
        Self {
            beta: BetaChoice::Fixed(beta),
            ..Self::default()
        }
    }

    pub fn tolerances(&self) -> DetectorTolerances {
        DetectorTolerances {
            eps_o: self.eps_o.as_f64(),
            eps_r: self.eps_r.as_f64(),
            eps_a: self.eps_a.as_f64(),
            eps_v: self.eps_v.as_f64(),
        }
    }

    fn check(&self) -> Result<()> {
        for (name, x) in [
            ("eps_o", self.eps_o),
            ("eps_r", self.eps_r),
            ("eps_a", self.eps_a),
            ("eps_v", self.eps_v),
        ] {
            if !(x > T::zero()) || !x.is_finite() {
                return Err(QpError::InvalidOption {
                    name,
                    reason: format!("must be positive and finite, got {x}"),
                });
            }
        }
        if self.max_iter == 0 {
            return Err(QpError::InvalidOption {
                name: "max_iter",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterLimit,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T: Real> {
    pub status: SolveStatus,
    pub beta: T,
    /// Present iff `Optimal`; `λ` unscaled.
    pub kkt: Option<KktPoint<T>>,
    /// Present iff `Infeasible`.
    pub certificate: Option<InfeasibilityCertificate<T>>,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub state: AdmmState<T>,
    pub rate_context: Option<RateContext>,
}

fn to_vec<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

impl<T: Real> SolveResult<T> {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "status": self.status,
            "beta": self.beta.as_f64(),
            "iterations": self.iterations,
            "y": to_vec(&self.state.y),
            "w": to_vec(&self.state.w),
            "lambda": to_vec(&(&self.state.lambda * self.beta)),
            "kkt": self.kkt.as_ref().map(|k| json!({
                "y": to_vec(&k.y),
                "xi": to_vec(&k.xi),
                "lambda": to_vec(&k.lambda),
            })),
            "certificate": self.certificate.as_ref().map(|c| c.to_json()),
        })
    }
}

fn cos_and_sign<T: Real>(lambda: &DVector<T>, gap: &DVector<T>) -> (f64, bool) {
    let (nl, ng) = (lambda.norm().as_f64(), gap.norm().as_f64());
    let cos = if nl < 1e-14 || ng < 1e-14 {
        f64::NAN
    } else {
        lambda.dot(gap).as_f64() / (nl * ng)
    };
    let aligned = lambda.iter().zip(gap.iter()).all(|(l, g)| *l * *g >= T::zero());
    (cos, aligned)
}

fn median(values: &VecDeque<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// `ξ = -(AR)^{-T} R'(Qy + q - βλ)`.
fn recover_xi<T: Real>(problem: &QpProblem<T>, bundle: &OperatorBundle<T>, y: &DVector<T>, lam: &DVector<T>) -> DVector<T> {
    if problem.m() == 0 {
        return DVector::zeros(0);
    }
    let g = problem.hessian() * y + problem.linear() - lam;
    let rhs = -(bundle.r.transpose() * g);
    (problem.a() * &bundle.r)
        .transpose()
        .lu()
        .solve(&rhs)
        .expect("AR is invertible for full row rank A")
}

/// Runs the iteration until the optimality test, the infeasibility test, or
/// `max_iter`.
pub fn solve<T: Real>(problem: &QpProblem<T>, options: &SolveOptions<T>) -> Result<SolveResult<T>> {
    options.check()?;
    let beta = match options.beta {
        BetaChoice::Fixed(b) => b,
        BetaChoice::Auto => optimal_beta(problem)?,
    };
    let bundle = build_operators(problem, beta)?;
    let ctx = options
        .reference
        .as_ref()
        .map(|r| RateContext::new(problem, r, &bundle.r, beta, bundle.mz_norm));
    let tol = options.tolerances();
    let beta_f = beta.as_f64();

    let mut state = AdmmState::initial(problem, options.w0.as_ref(), options.lambda0.as_ref())?;
    let mut trace = Vec::new();
    let mut prev_dv: Option<DVector<T>> = None;
    let mut prev_dist: Option<f64> = None;
    let mut dv_window: VecDeque<f64> = VecDeque::with_capacity(OMEGA_WINDOW);

    let mut status = SolveStatus::IterLimit;
    let mut last_dlam = DVector::zeros(problem.n());
    while state.k < options.max_iter {
        let next = admm_step(&state, &bundle, problem);
        let dy = &next.y - &state.y;
        let dw = &next.w - &state.w;
        let dlam = &next.lambda - &state.lambda;
        let dv = &next.v - &state.v;

        let norm_dw = dw.norm().as_f64();
        let norm_dlam = dlam.norm().as_f64();
        let norm_dy = dy.norm().as_f64();
        let norm_dv = dv.norm().as_f64();
        let opt_residual = (beta_f * norm_dw).max(norm_dlam);
        let (cos_theta, sign_aligned) = cos_and_sign(&next.lambda, &(&next.w - &next.y));
        let v_norm = next.v.norm().as_f64();
        let dv_change_ratio = match &prev_dv {
            Some(p) if v_norm > 0.0 => (&dv - p).norm().as_f64() / v_norm,
            Some(_) => f64::INFINITY,
            None => f64::NAN,
        };
        let (dist_v, rate, active_subset, alpha) = match &ctx {
            Some(c) => {
                let v = next.v.map(|x| x.as_f64());
                let lam = next.lambda.map(|x| x.as_f64());
                let d = (&v - &c.v_star).norm();
                let rate = prev_dist.map(|p| if p > 0.0 { d / p } else { 0.0 });
                prev_dist = Some(d);
                let (_, sub) = c.active_at(&lam);
                let alpha = if d > 0.0 {
                    (&lam - &c.lambda_star_scaled).norm() / d
                } else {
                    0.0
                };
                (Some(d), rate, Some(sub), Some(alpha))
            }
            None => (None, None, None, None),
        };
        let row = TraceRow {
            k: next.k,
            norm_dy,
            norm_dw,
            norm_dlam,
            norm_dv,
            cos_theta,
            ratio_b: norm_dy.max(beta_f * norm_dw) / opt_residual,
            opt_residual,
            sign_aligned,
            dv_change_ratio,
            dist_v,
            rate,
            active_subset,
            alpha,
        };

        if dv_window.len() == OMEGA_WINDOW {
            dv_window.pop_front();
        }
        dv_window.push_back(norm_dv);
        prev_dv = Some(dv);
        last_dlam = dlam;
        state = next;

        let converged = opt_residual <= tol.eps_o;
        let fired = !converged
            && state.k >= DETECT_WARMUP
            && state.k % DETECT_EVERY == 0
            && detect_infeasibility(&row, &tol);
        if options.trace_every > 0 && (state.k % options.trace_every == 0 || converged || fired) {
            trace.push(row);
        }
        if converged {
            status = SolveStatus::Optimal;
            break;
        }
        if fired {
            status = SolveStatus::Infeasible;
            break;
        }
    }
    log::debug!("solve finished: {:?} after {} iterations", status, state.k);

    let kkt = (status == SolveStatus::Optimal).then(|| {
        let lam = &state.lambda * beta;
        KktPoint {
            xi: recover_xi(problem, &bundle, &state.y, &lam),
            y: state.y.clone(),
            lambda: lam,
        }
    });
    let certificate = if status == SolveStatus::Infeasible {
        let mut cert = InfeasibilityCertificate::compute(problem)?;
        cert.omega = median(&dv_window).map(T::lit);
        cert.drift = certify::drift(&last_dlam, &cert.lambda_circ);
        let window = LimitWindow {
            y: state.y.clone(),
            w: state.w.clone(),
            lambda: state.lambda.clone(),
            delta_lambda: last_dlam,
            beta,
        };
        cert.checks = Some(certify::verify_limit(&window, &cert, &bundle.z, options.eps_a));
        Some(cert)
    } else {
        None
    };

    Ok(SolveResult {
        status,
        beta,
        kkt,
        certificate,
        trace,
        iterations: state.k,
        state,
        rate_context: ctx,
    })
}
