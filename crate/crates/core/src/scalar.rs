//! Floating-point scalar abstraction shared by the numeric modules.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point: f32 or f64.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {
    /// Lossless for f64, rounding for f32.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Float converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Round half-up and clamp into the 8-bit sample range.
#[inline]
pub fn quantize_u8<T: Scalar>(v: T) -> u8 {
    let r = (v + T::of(0.5)).floor();
    if !(r > T::zero()) {
        0
    } else if r >= T::of(255.0) {
        255
    } else {
        r.to_u8().unwrap_or(255)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_half_up_and_clamps() {
        assert_eq!(quantize_u8(177.5f64), 178);
        assert_eq!(quantize_u8(191.5f32), 192);
        assert_eq!(quantize_u8(63.75f64), 64);
        assert_eq!(quantize_u8(-3.0f64), 0);
        assert_eq!(quantize_u8(300.0f64), 255);
        assert_eq!(quantize_u8(f64::NAN), 0);
    }
}
