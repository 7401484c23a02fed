use std::fmt;

use nalgebra::RealField;
use num_traits::{Float, ToPrimitive};

/// Floating-point scalar the solver and the analysis are generic over.
///
/// `RealField` supplies the linear algebra (SVD, symmetric eigen, Cholesky);
/// the extra items cover what it does not: infinities for one-sided bounds
/// and lossless-enough conversion to `f64` for reporting.
pub trait Real: RealField + Copy + ToPrimitive + fmt::Display + fmt::Debug + Send + Sync + 'static {
    fn infinity() -> Self;

    fn neg_infinity() -> Self {
        -Self::infinity()
    }

    /// Converts an `f64` constant into `Self`.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_nan_value(self) -> bool {
        self.partial_cmp(&self).is_none()
    }

    fn machine_epsilon() -> Self;
}

impl Real for f64 {
    fn infinity() -> Self {
        <f64 as Float>::infinity()
    }

    fn machine_epsilon() -> Self {
        f64::EPSILON
    }
}

impl Real for f32 {
    fn infinity() -> Self {
        <f32 as Float>::infinity()
    }

    fn machine_epsilon() -> Self {
        f32::EPSILON
    }
}
