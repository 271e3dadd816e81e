//! Coorbit theory at desk scale.
//!
//! Wavelet and short-time Fourier voice transforms over the affine group and
//! the time-frequency plane, Haar quadrature on truncated charts, weighted
//! mixed norms, group convolution and oscillation, well-spread point families
//! with partitions of unity, and certified Banach-frame reconstruction.

mod dft;
pub mod discretization;
pub mod error;
pub mod frames;
pub mod group_core;
pub mod group_field;
pub mod signal;
pub mod voice;
pub mod weights;

pub use error::{CoorbitError, Result};
pub use group_core::{AffinePoint, GroupField, GroupPoint, GroupQuadrature, HeisenbergPoint, TfPoint};
pub use num_complex::Complex64;
pub use signal::SampledSignal;
pub use weights::WeightSpec;
