use thiserror::Error;

/// Errors raised by the boundary toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data length {got} does not match {width}x{height}x{channels} = {expected}")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid dimensions {width}x{height}x{channels}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("resample factor {factor} maps {width}x{height} to an empty grid")]
    InvalidFactor {
        factor: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("map is not binary at pixel {index} (value {value})")]
    NotBinary { index: usize, value: f64 },
    #[error("empty bag anchored at pixel {anchor}")]
    EmptyBag { anchor: usize },
    #[error("forward pass was run without retaining intermediates")]
    MissingIntermediates,
    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },
    #[error("no convergence after {iterations} iterations; residuals {residuals:?}")]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),
    #[error("problem size {n} exceeds cap {cap}; downsample the input")]
    TooLarge { n: usize, cap: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error is a numerical failure (as opposed to invalid input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::NoConvergence { .. } | Error::DegenerateGraph(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
