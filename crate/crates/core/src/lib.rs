//! Gravitational force-field cell detection, segmentation and tracking
//! for 2-D fluorescence microscopy time-lapse sequences.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basins;
pub mod config;
pub mod error;
pub mod eval;
pub mod gravity;
pub mod image;
pub mod io;
pub mod morphology;
pub mod overlay;
pub mod pipeline;
pub mod preprocess;
pub mod segmentation;
pub mod synth;
pub mod tracking;

pub use error::{Error, Result};
pub use image::{bilinear_sample, normalize, Image2D, LabelMap, Mask, Rect, Vec2};
