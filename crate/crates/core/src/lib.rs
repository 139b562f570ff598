//! Illumination-angle self-calibration for Fourier ptychographic microscopy.
//!
//! A brightfield stage finds each image's pupil circle in its spectrum and
//! extrapolates the correction to darkfield images with a RANSAC transform
//! fit. Spectral correlation then refines every angle inside the phase
//! retrieval loop. A built-in simulator supplies datasets with known angles.
//!
//! The guide in `book/` walks through each stage; its code blocks run as
//! doctests of this crate.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bfcal;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod field;
pub mod forward;
pub mod fpm;
pub mod optics;
pub mod simulate;
pub mod transform;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/forward-model.md")]
    mod forward_model {}
    #[doc = include_str!("../../../book/src/brightfield.md")]
    mod brightfield {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/spectral-correlation.md")]
    mod spectral_correlation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
