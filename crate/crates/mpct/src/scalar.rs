//! Scalar abstraction. The whole library is generic over the working
//! floating-point type; `f32` and `f64` implement [`Scalar`] out of the box.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the crate.
pub trait Scalar: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T> Scalar for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn convert<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant not representable in scalar type")
}

/// Converts a working scalar into `f64` (lossless for `f32`/`f64`).
#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("scalar not representable as f64")
}
