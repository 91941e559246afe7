//! Preprocessing and anatomy-aware postprocessing for coronary angiogram
//! segmentation.
//!
//! Image filters are generic over `f32` and `f64` through [`Scalar`]; the
//! aliases below fix the precision for callers that do not care.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod error;
pub mod evaluation;
pub mod guided;
pub mod image_core;
pub mod io;
pub mod morphology;
pub mod pipeline;
pub mod scalar;
pub mod spectral;
pub mod synthetic;
pub mod tree_logic;

pub use error::{Error, Result};
pub use image_core::GrayImage;
pub use scalar::Scalar;

pub type GrayImageF32 = image_core::GrayImage<f32>;
pub type GrayImageF64 = image_core::GrayImage<f64>;
pub type SpectrumF64 = spectral::Spectrum<f64>;
