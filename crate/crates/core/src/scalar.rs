//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar usable for volumes, spectra and the solver: `f32` or `f64`.
pub trait Real:
    Float + FftNum + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync
{
    /// Lossy conversion from `f64`; exact for `f64`.
    fn of(x: f64) -> Self;
    /// Widening conversion to `f64`.
    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
