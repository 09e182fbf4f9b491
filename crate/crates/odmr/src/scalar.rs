//! Floating-point scalar abstraction for the model equations.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Scalar type the single-center math is generic over: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Copy + std::fmt::Debug + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in Real scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
