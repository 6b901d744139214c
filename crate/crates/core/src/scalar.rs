//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar the GP machinery is generic over (`f32`, `f64`).
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`, rounding as needed.
    #[inline]
    fn of(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("f64 is representable in every float type")
    }

    /// Lossy conversion to `f64` for reporting and persistence.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the underlying type.
    fn epsilon() -> Self;

    /// `true` when the value is neither NaN nor infinite.
    #[inline]
    fn finite(self) -> bool {
        self.to_f64_lossy().is_finite()
    }
}

impl Scalar for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
}
