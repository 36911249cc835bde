//! Floating point scalar abstraction shared by scoring, sampling and ranking.

use std::fmt::{Debug, Display};

/// Floating point type used for log-probabilities, similarities and weights: f32 or f64.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::iter::Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from a count or ratio.
    fn of(value: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(value).expect("f64 is representable")
    }

    fn of_usize(value: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(value).expect("usize is representable")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
