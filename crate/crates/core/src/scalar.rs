use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type the state algebra is written against.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// (1e-12 normalization, 1e-15 pruning) assume `f64`; `f32` instantiations
/// work but only to single precision.
pub trait Real:
    'static
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
{
    /// Converts an `f64` literal. Infallible for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Reduces an angle into `[0, period)`, mapping a rounding result of exactly
/// `period` back to zero.
pub fn reduce_angle<T: Real>(angle: T, period: T) -> T {
    let mut a = angle % period;
    if a < T::zero() {
        a += period;
    }
    if a >= period {
        a = T::zero();
    }
    a
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi<T: Real>(angle: T) -> T {
    let two_pi = T::PI() + T::PI();
    let a = reduce_angle(angle, two_pi);
    if a > T::PI() {
        a - two_pi
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn reduce_angle_ranges() {
        assert_eq!(reduce_angle(0.0, 2.0 * PI), 0.0);
        assert!((reduce_angle(-0.5, 2.0 * PI) - (2.0 * PI - 0.5)).abs() < 1e-15);
        assert!((reduce_angle(7.0, 2.0 * PI) - (7.0 - 2.0 * PI)).abs() < 1e-15);
        assert_eq!(reduce_angle(PI, PI), 0.0);
        assert_eq!(reduce_angle(-1e-20_f64, 2.0 * PI), 0.0);
    }

    #[test]
    fn wrap_pi_is_half_open() {
        assert_eq!(wrap_pi(PI), PI);
        assert!((wrap_pi(-PI) - PI).abs() < 1e-15);
        assert!((wrap_pi(3.5 * PI) + 0.5 * PI).abs() < 1e-12);
        assert_eq!(wrap_pi(0.0_f32), 0.0);
    }
}
