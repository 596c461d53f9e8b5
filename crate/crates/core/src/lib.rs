//! Boundary detection toolkit: image grids and pyramids, multiple-instance
//! bag construction, a multi-scale deeply supervised edge network with
//! hand-written gradients, normalized-cuts spectral boundaries, a dense CRF
//! and a boundary benchmark.

pub mod ablation;
pub mod bags;
pub mod bench;
pub mod crf;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod imagecore;
pub mod losses;
pub mod ncuts;
pub mod pipeline;
pub mod net;
pub mod scalar;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision image.
pub type Image = imagecore::ImageGrid<f64>;
/// Double-precision network parameters.
pub type Params = net::NetworkParams<f64>;
/// Double-precision score stack.
pub type Scores = net::ScoreStack<f64>;
