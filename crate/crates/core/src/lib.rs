//! Retinex decomposition and low-light enhancement.
//!
//! A decomposition network splits an image `S` into reflectance `R` and a
//! one-channel illumination map `I` with `S ≈ R ∘ I`. An encoder-decoder
//! network brightens `I`, reflectance is optionally denoised in proportion
//! to darkness, and the two are recombined.
//!
//! Modules:
//!
//! - [`numerics`]: tensors, reverse-mode differentiation, conv kernels.
//! - [`model`]: the two networks, initialization and the weights file.
//! - [`losses`]: decomposition and enhancement training objectives.
//! - [`data`]: images, PNG I/O, YCbCr histograms, synthetic darkening,
//!   paired datasets and patch sampling.
//! - [`training`]: SGD, the three-phase schedule, checkpoints, logs.
//! - [`denoise`]: illumination-weighted non-local means.
//! - [`pipeline`]: end-to-end enhancement and PSNR/SSIM evaluation.
//! - [`config`]: the `key = value` training configuration format.

pub mod config;
pub mod data;
pub mod denoise;
mod error;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
