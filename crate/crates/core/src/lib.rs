//! Edge-aware cost volume upsampling for stereo matching.
//!
//! A low-resolution matching-cost volume is lifted into a bilateral grid
//! over `(x, y, disparity, guidance)` and sliced back to full resolution
//! under a guidance image, so that interpolation follows intensity edges
//! instead of blurring across them. Both the slice and the soft-argmin
//! regression come with analytic gradients.
//!
//! Modules:
//!
//! - [`array`]: dense row-major `f32` arrays
//! - [`imageio`]: PGM/PPM input, PFM disparity files
//! - [`features`]: luma guidance, census costs, group-wise correlation
//! - [`grid`]: grid construction, slicing and its adjoint
//! - [`regress`]: soft argmin and the smooth L1 loss
//! - [`metrics`]: EPE, bad-pixel rates, D1 and the edge/flat split
//! - [`pipeline`]: end-to-end matcher, upsampler comparison, benchmarks

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod error;
pub mod features;
pub mod grid;
pub mod imageio;
pub mod metrics;
pub mod pipeline;
pub mod regress;

pub use array::DenseArray;
pub use error::{Error, Result};
pub use features::{CostVolume, GuidanceMap, Polarity};
pub use grid::{BilateralGrid, SliceParams};
pub use imageio::{DisparityMap, Image};
