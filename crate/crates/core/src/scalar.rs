//! Scalar abstraction shared by the reference kernels and the data pipelines.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type accepted by tensors and kernels: `f32` or `f64`.
///
/// The toolchain's contract is binary32 (`f32`); the `f64` instantiation is
/// available for wider-precision replays and analysis.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless for `f64`, round-to-nearest for `f32`.
    fn from_binary32(v: f32) -> Self;

    fn from_binary64(v: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_binary32(v: f32) -> Self {
        v
    }

    #[inline]
    fn from_binary64(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_binary32(v: f32) -> Self {
        v as f64
    }

    #[inline]
    fn from_binary64(v: f64) -> Self {
        v
    }
}
