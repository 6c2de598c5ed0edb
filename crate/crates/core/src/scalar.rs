//! Scalar abstraction so the numerical core works over `f32` or `f64`.

use nalgebra::RealField;

/// Real scalar type the linear-algebra core is generic over.
///
/// Everything numeric goes through `RealField`; the two conversion hooks
/// exist because constants, probabilities and report values live in `f64`.
pub trait Scalar: RealField + Copy {
    fn of_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}
