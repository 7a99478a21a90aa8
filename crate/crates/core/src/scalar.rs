//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the controller and simulator are generic over.
///
/// Implemented for `f32` and `f64`. The benchmarks are tuned for `f64`; with
/// `f32` the endgame near the prescribed time loses most of its precision.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn all_finite<S: Real>(v: &[S]) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub(crate) fn to_f64_vec<S: Real>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

pub(crate) fn norm2<S: Real>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt()
}

pub(crate) fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}
