//! Scalar abstraction for the generic numerics.

use nalgebra as na;
use num_traits as nt;

/// Floating point scalar usable by the core math.
pub trait Real: Copy + na::RealField + nt::FromPrimitive + nt::ToPrimitive {}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for lifting an `f64` constant into a generic scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}
