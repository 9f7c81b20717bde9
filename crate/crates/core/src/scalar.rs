use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point element type of tensors and models.
///
/// Reductions go through an `f64` accumulator regardless of the element
/// type; persisted payloads are always 32-bit.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn lit(v: f64) -> Self;
    fn wide(self) -> f64;
    fn narrow_from(v: f32) -> Self;
    fn to_single(self) -> f32;
}

impl Scalar for f32 {
    #[inline(always)]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn wide(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn narrow_from(v: f32) -> Self {
        v
    }
    #[inline(always)]
    fn to_single(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn wide(self) -> f64 {
        self
    }
    #[inline(always)]
    fn narrow_from(v: f32) -> Self {
        v as f64
    }
    #[inline(always)]
    fn to_single(self) -> f32 {
        self as f32
    }
}
