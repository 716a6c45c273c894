//! Command-line driver for strategic-state explanations: configuration,
//! the end-to-end pipeline, evaluation studies and SVG rendering.

pub mod config;
pub mod pipeline;
pub mod render;
