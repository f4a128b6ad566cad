//! Floating-point abstraction shared by the estimation code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the estimators are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion from a count.
    #[inline]
    fn count(k: usize) -> Self {
        Self::from_usize(k).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Largest representable value strictly below `x` that still exceeds `floor`,
/// or the midpoint of `(floor, x)` when no such value is found.
pub(crate) fn just_below<T: Scalar>(x: T, floor: T) -> T {
    let step = T::epsilon() * x.abs().max(T::one());
    let cand = x - step;
    if cand > floor && cand < x {
        cand
    } else {
        floor + (x - floor) / T::lit(2.0)
    }
}
