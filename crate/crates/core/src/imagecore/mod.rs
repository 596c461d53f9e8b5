//! Image, score-map, mask and pyramid primitives shared by all other modules.

mod grid;
pub mod io;
mod pyramid;
mod resample;

pub use grid::{AnnotationSet, ImageGrid, Mask};
pub use pyramid::{build_pyramid, Pyramid, PyramidLevel};
pub use resample::{resample, resize, scaled_dim, Resampler};

/// Luma weights for RGB → gray conversion.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];
