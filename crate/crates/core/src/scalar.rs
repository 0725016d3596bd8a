use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Element type of every tensor and kernel in this crate.
///
/// Production paths run on `f32`; the same kernels instantiated with `f64`
/// are what the finite-difference gradient checks exercise.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Cast from `f64`, rounding to nearest for `f32`.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(|| {
            if v.is_nan() {
                Self::nan()
            } else if v > 0.0 {
                Self::infinity()
            } else {
                Self::neg_infinity()
            }
        })
    }

    /// Widen to `f64`; always exact for `f32` and the identity for `f64`.
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_f64_lossy(v as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
