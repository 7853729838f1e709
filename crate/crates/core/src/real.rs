//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the discretization is generic over.
///
/// Implemented for `f32` and `f64`. All public geometry, assembly and solver
/// types are parametrized by it; see the aliases at the crate root.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Machine-precision dependent tolerance used to detect degenerate geometry.
    fn geometric_epsilon() -> Self;
}

impl Real for f64 {
    fn geometric_epsilon() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn geometric_epsilon() -> Self {
        1e-6
    }
}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline(always)]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

#[inline(always)]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
