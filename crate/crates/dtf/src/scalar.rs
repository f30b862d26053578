//! Scalar abstraction so the pipeline can run in `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign, NumCast};

/// Floating-point scalar for grids, networks, and losses.
///
/// Gradient checking and checkpoint files always use `f64`; everything else
/// is generic over this trait.
pub trait Scalar:
    Float + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    #[inline]
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 representable as Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("Scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
