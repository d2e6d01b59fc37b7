//! Rice grain image analysis.
//!
//! The crate is organised as a pipeline of small, pure stages:
//!
//! 1. [`imgproc`]: grayscale conversion, contrast remapping, brightness levels,
//!    binarization, small-region removal and median filtering.
//! 2. [`segmentation`]: connected components and per-grain morphometry
//!    (long axis, short axis, projected area).
//! 3. [`chalk`]: K-means based chalky-pixel segmentation, sample chalkiness
//!    and the brightness sweep.
//! 4. [`grading`]: completeness classes, broken-rice rates, variety
//!    identification, admixture and grade assignment.
//!
//! [`model`] holds the variety table and grading standards shared by every
//! stage, and [`attention`] provides forward passes of the SimAM and ECA
//! attention blocks over NCHW tensors.

pub mod attention;
pub mod chalk;
pub mod error;
pub mod geometry;
pub mod grading;
pub mod imgproc;
pub mod model;
pub mod overlay;
pub mod segmentation;

pub use error::{Error, Result};
