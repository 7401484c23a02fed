//! Named test problems and a seeded random generator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QpError, Result};
use crate::problem::{BoxBounds, QpProblem};
use crate::scalar::Real;

fn lit<T: Real>(x: &[f64]) -> Vec<T> {
    x.iter().map(|&v| T::lit(v)).collect()
}

fn two_var<T: Real>(q_diag: [f64; 2], q: [f64; 2], a: [f64; 2], b: f64, bounds: BoxBounds<T>) -> QpProblem<T> {
    QpProblem::new(
        DMatrix::from_diagonal(&DVector::from_vec(lit(&q_diag))),
        DVector::from_vec(lit(&q)),
        DMatrix::from_row_slice(1, 2, &lit(&a)),
        DVector::from_vec(lit(&[b])),
        bounds,
    )
    .expect("built-in problem data is well formed")
}

fn box_2x2<T: Real>(lo: [f64; 2], hi: [f64; 2]) -> BoxBounds<T> {
    BoxBounds::new(DVector::from_vec(lit(&lo)), DVector::from_vec(lit(&hi))).expect("finite box")
}

/// `min ½y'y - 3y₂  s.t.  y₁ + y₂ = 1, y >= 0`. Solution `(0, 1)`, multipliers `(2, 0)`.
pub fn qpex1<T: Real>() -> QpProblem<T> {
    two_var([1.0, 1.0], [0.0, -3.0], [1.0, 1.0], 1.0, BoxBounds::nonnegative(2))
}

/// qpex1 after the change of variables `y_i -> κ_i y_i`.
/// Solution `(0, 1/κ₂)`, multipliers `(2κ₁, 0)`.
pub fn qpex2<T: Real>(k1: f64, k2: f64) -> QpProblem<T> {
    two_var(
        [k1 * k1, k2 * k2],
        [0.0, -3.0 * k2],
        [k1, k2],
        1.0,
        BoxBounds::nonnegative(2),
    )
}

/// qpex2 with `q₁ = -2κ₁`: the solution `(0, 1/κ₂)` has a zero multiplier on
/// the active bound.
pub fn nonstrict<T: Real>(k1: f64, k2: f64) -> QpProblem<T> {
    two_var(
        [k1 * k1, k2 * k2],
        [-2.0 * k1, -3.0 * k2],
        [k1, k2],
        1.0,
        BoxBounds::nonnegative(2),
    )
}

/// Infeasible: the line `y₁ - y₂ = -1` misses the box `[-2,2]×[5,10]`.
pub fn qpex3<T: Real>() -> QpProblem<T> {
    two_var(
        [1.0, 1.0],
        [0.0, -3.0],
        [1.0, -1.0],
        -1.0,
        box_2x2([-2.0, 5.0], [2.0, 10.0]),
    )
}

/// Infeasible: `y₂ = 1` against the box `[-2,2]×[5,10]`, with `q = (q₁, -3)`.
pub fn qpex3_variant<T: Real>(q1: f64) -> QpProblem<T> {
    two_var(
        [1.0, 1.0],
        [q1, -3.0],
        [0.0, 1.0],
        1.0,
        box_2x2([-2.0, 5.0], [2.0, 10.0]),
    )
}

/// Random strictly convex QP with a finite box and a strictly interior
/// feasible point. `Q = LL' + 0.1 I`, `A` Gaussian-like, `b = A y₀`.
pub fn random_feasible<T: Real>(seed: u64, n: usize, m: usize) -> QpProblem<T> {
    assert!(m <= n, "need m <= n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uni = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let l = DMatrix::from_fn(n, n, |_, _| uni(-1.0, 1.0));
    let hessian = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let linear = DVector::from_fn(n, |_, _| uni(-3.0, 3.0));
    let a = DMatrix::from_fn(m, n, |_, _| uni(-1.0, 1.0));
    let lower = DVector::from_fn(n, |_, _| uni(-3.0, -0.5));
    let upper = DVector::from_fn(n, |_, _| uni(0.5, 3.0));
    let y0 = DVector::from_fn(n, |i, _| {
        let t = uni(0.1, 0.9);
        lower[i] + t * (upper[i] - lower[i])
    });
    let b = &a * &y0;
    QpProblem::new(
        hessian.map(T::lit),
        linear.map(T::lit),
        a.map(T::lit),
        b.map(T::lit),
        BoxBounds::new(lower.map(T::lit), upper.map(T::lit)).expect("finite box"),
    )
    .expect("random data is finite")
}

fn parse_args(name: &str, args: &str, count: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = if args.trim().is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| QpError::Parse(format!("{name}: bad argument list {args:?}: {e}")))?
    };
    if vals.len() != count {
        return Err(QpError::Parse(format!(
            "{name} takes {count} argument(s), got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Resolves names such as `qpex1`, `qpex2(1,10)`, `qpex2:1,10`,
/// `qpex3-variant(3)`, `nonstrict(1,1)` or `random(seed,n,m)`.
pub fn by_name<T: Real>(spec: &str) -> Result<QpProblem<T>> {
    let spec = spec.trim();
    let (name, args) = match spec.find(['(', ':']) {
        Some(i) => {
            let rest = spec[i + 1..].trim_end_matches(')');
            (&spec[..i], rest)
        }
        None => (spec, ""),
    };
    let name = name.trim().to_ascii_lowercase();
    match name.as_str() {
        "qpex1" => parse_args(&name, args, 0).map(|_| qpex1()),
        "qpex2" => parse_args(&name, args, 2).map(|a| qpex2(a[0], a[1])),
        "qpex3" => parse_args(&name, args, 0).map(|_| qpex3()),
        "qpex3-variant" | "qpex3_variant" => parse_args(&name, args, 1).map(|a| qpex3_variant(a[0])),
        "nonstrict" => parse_args(&name, args, 2).map(|a| nonstrict(a[0], a[1])),
        "random" => {
            let a = parse_args(&name, args, 3)?;
            if a.iter().any(|x| *x < 0.0 || x.fract() != 0.0) || a[2] > a[1] || a[1] < 1.0 {
                return Err(QpError::Parse(format!("random: need integers seed, n >= 1, m <= n; got {args:?}")));
            }
            Ok(random_feasible(a[0] as u64, a[1] as usize, a[2] as usize))
        }
        _ => Err(QpError::Parse(format!(
            "unknown built-in {name:?}; expected qpex1, qpex2(k1,k2), qpex3, qpex3-variant(q1), nonstrict(k1,k2) or random(seed,n,m)"
        ))),
    }
}
