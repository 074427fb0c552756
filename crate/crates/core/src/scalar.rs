//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt;

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar (`f32` or `f64`) usable throughout the crate.
///
/// Random draws are always produced in `f64` and narrowed with [`Real::lit`],
/// so an `f32` realization is the rounded image of the `f64` one.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + FloatConst + fmt::Display + Send + Sync + 'static
{
    /// Narrow an `f64` constant to this type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar converts to f64")
    }

    /// Unit roundoff of the type.
    fn epsilon() -> Self;
}

impl Real for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(<f64 as Real>::lit(0.25).as_f64(), 0.25);
        assert_eq!(<f32 as Real>::lit(0.1).as_f64(), 0.1f32 as f64);
    }
}
