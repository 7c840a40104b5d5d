//! Scalar abstraction: all floating-point math in this crate is generic over
//! [`Real`], instantiated as `f32` or `f64` (`f64` is the default and the
//! precision used by the CLI).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the image, geometry and optimization code runs on.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for literals and tunables.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in Real")
    }

    /// Lossy conversion to `f64`, for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Conversion from a pixel count or index.
    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize representable in Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}
