//! Pixel containers, geometry-preserving losses, Gaussian-Poisson blending
//! and the evaluation metrics used by the architectural style-transfer
//! pipeline.
//!
//! All intensities are `f64` in `[0, 1]`; 8-bit values only exist at the PNG
//! boundary.

pub mod blending;
mod error;
pub mod imagecore;
pub mod kv;
pub mod losses;
pub mod metrics;
pub mod segmentation;

pub use error::{Error, Result};
pub use imagecore::{GradientField, Image, Luma, Mask, Plane};
