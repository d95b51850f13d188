//! Editable multi-layer graphic composition: the layer protocol, a
//! deterministic renderer, a pluggable two-model generation pipeline, a small
//! forward-only joint-attention block, corpus tooling and a judge-based
//! evaluation harness.

// `!(a < b)` is used on purpose: it is also true for NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod blend;
pub mod dataset;
pub mod image;
pub mod pipeline;
pub mod font;
pub mod protocol;
pub mod render;
pub mod scan;
pub mod text;
pub mod toydit;

pub use image::{RgbImage, RgbaImage};
pub use protocol::{CanvasSize, FieldMask, Layer, Protocol, Violation};
