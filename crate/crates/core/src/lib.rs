//! Missing-cone simulation and split Bregman total-variation regularization for
//! optical diffraction tomography.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`). The solver and the
//! command-line pipeline work in `f64`; files store `f32`. The aliases below name
//! the common instantiations.

pub mod bregman;
pub mod error;
pub mod metrics;
pub mod optics;
pub mod patchwork;
pub mod phantoms;
pub mod scalar;
pub mod volgrid;
pub mod volio;

pub use error::{Error, Result};
pub use bregman::{regularize, regularize_volume, NonnegMode, SolveReport, SolverParams};
pub use scalar::Real;
pub use volgrid::{div, fft3, grad, ifft3, laplacian_symbol, Fft3, GridSpec, Spectrum3, SupportMask, Volume3};

/// Working-precision volume.
pub type Volume = Volume3<f64>;
/// Working-precision spectrum.
pub type Spectrum = Spectrum3<f64>;
/// File-precision volume.
pub type VolumeF32 = Volume3<f32>;
/// File-precision spectrum.
pub type SpectrumF32 = Spectrum3<f32>;
