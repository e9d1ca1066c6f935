//! Single-image super-resolution toolkit.
//!
//! The crate bundles a deterministic f64 autodiff engine for the handful of
//! graph primitives a fusion CNN needs, the MLRN network built on top of it,
//! a MATLAB-convention bicubic resampler for dataset degradation and
//! baselines, PSNR/SSIM evaluation, an Adam training loop, and the `mlrn`
//! command-line driver.

pub mod cli;
pub mod config;
pub mod image;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod training;
