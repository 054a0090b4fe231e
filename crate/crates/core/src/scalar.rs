//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the algorithms are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances that depend on the precision
/// of the type are exposed as associated constants so that the same code path
/// can be exercised in single precision with looser targets.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Default relative tolerance for iterative special functions.
    const SPECFUN_TOL: f64;
    /// Default absolute/relative tolerance for adaptive quadrature.
    const QUAD_TOL: f64;

    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::c(n as f64)
    }
}

impl Real for f64 {
    const SPECFUN_TOL: f64 = 1e-14;
    const QUAD_TOL: f64 = 1e-13;
}

impl Real for f32 {
    const SPECFUN_TOL: f64 = 1e-7;
    const QUAD_TOL: f64 = 1e-6;
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Euclidean norm.
pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log(sum(exp(x)))` over a slice; `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}
