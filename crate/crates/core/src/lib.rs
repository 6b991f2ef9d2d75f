//! Staircase localization from RGB-D frames and detected nosing segments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angles;
pub mod camera;
pub mod dataset;
pub mod detection;
pub mod eval;
pub mod localizer;
pub mod overlay;
pub mod pipeline;
pub mod registry;
pub mod segments;
pub mod synth;
