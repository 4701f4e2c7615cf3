//! Scalar abstraction: the numerical core is generic over the working
//! floating-point type (`f32` or `f64`).

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Trait bound for the working scalar type.
///
/// Everything the library computes with is available through
/// [`nalgebra::RealField`] plus the num-traits conversions; `f32` and `f64`
/// satisfy the bound.
pub trait Scalar: RealField + FromPrimitive + ToPrimitive + Copy + Send + Sync {}

impl<T> Scalar for T where T: RealField + FromPrimitive + ToPrimitive + Copy + Send + Sync {}

/// Pull an `f64` literal into the working scalar type.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must be representable in the scalar type")
}

/// Convert a count into the working scalar type.
#[inline]
pub fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("usize must be representable in the scalar type")
}

/// Lossy view of a scalar as `f64`, for diagnostics and error messages.
#[inline]
pub fn approx_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
