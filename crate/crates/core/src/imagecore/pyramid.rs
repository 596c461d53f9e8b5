use super::grid::ImageGrid;
use super::resample::resample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One pyramid level with its scale relative to the original image.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel<T> {
    pub scale: f64,
    pub image: ImageGrid<T>,
}

/// Image pyramid, finest level first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid<T> {
    levels: Vec<PyramidLevel<T>>,
    /// Dimensions of the image the pyramid was built from.
    base_dims: (usize, usize),
}

impl<T: Scalar> Pyramid<T> {
    /// Single level holding the image itself at scale 1.
    pub fn single(image: ImageGrid<T>) -> Self {
        let base_dims = image.dims();
        Self {
            levels: vec![PyramidLevel { scale: 1.0, image }],
            base_dims,
        }
    }

    pub fn from_levels(levels: Vec<PyramidLevel<T>>, base_dims: (usize, usize)) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
        }
        if levels.windows(2).any(|w| w[1].scale >= w[0].scale) {
            return Err(Error::InvalidArgument("pyramid scales must decrease".into()));
        }
        Ok(Self { levels, base_dims })
    }

    pub fn levels(&self) -> &[PyramidLevel<T>] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Resolution at which score maps are reported (the original image's).
    pub fn base_dims(&self) -> (usize, usize) {
        self.base_dims
    }
}

/// Level 0 is `img` upsampled by `top_upsample`; level `i` downsamples level 0 by `2^i`.
pub fn build_pyramid<T: Scalar>(img: &ImageGrid<T>, top_upsample: f64, n_levels: usize) -> Result<Pyramid<T>> {
    if n_levels == 0 {
        return Err(Error::InvalidArgument("n_levels must be at least 1".into()));
    }
    let top = resample(img, top_upsample)?;
    let mut levels = Vec::with_capacity(n_levels);
    for i in 1..n_levels {
        let f = 0.5f64.powi(i as i32);
        levels.push(PyramidLevel {
            scale: top_upsample * f,
            image: resample(&top, f)?,
        });
    }
    levels.insert(
        0,
        PyramidLevel {
            scale: top_upsample,
            image: top,
        },
    );
    Pyramid::from_levels(levels, img.dims())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims<T: Scalar>(p: &Pyramid<T>) -> Vec<(usize, usize)> {
        p.levels().iter().map(|l| l.image.dims()).collect()
    }

    #[test]
    fn default_three_levels() {
        let img = ImageGrid::filled(100, 100, 1, 0.3f64).unwrap();
        let p = build_pyramid(&img, 2.0, 3).unwrap();
        assert_eq!(dims(&p), vec![(200, 200), (100, 100), (50, 50)]);
        assert_eq!(p.base_dims(), (100, 100));
        assert_eq!(p.levels()[2].scale, 0.5);
    }

    #[test]
    fn bsds_sized_image_rounds_half_up() {
        let img = ImageGrid::filled(381, 421, 1, 0.0f64).unwrap();
        let p = build_pyramid(&img, 2.0, 3).unwrap();
        assert_eq!(dims(&p), vec![(762, 842), (381, 421), (191, 211)]);
    }

    #[test]
    fn single_level_is_upsampled_input() {
        let img = ImageGrid::from_fn(6, 4, |x, y| (x + y) as f64 / 10.0).unwrap();
        let p = build_pyramid(&img, 2.0, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.levels()[0].image, resample(&img, 2.0).unwrap());
        assert!(build_pyramid(&img, 2.0, 0).is_err());
    }

    #[test]
    fn too_many_levels_propagates_resample_error() {
        let img = ImageGrid::filled(2, 2, 1, 0.0f64).unwrap();
        assert!(build_pyramid(&img, 1.0, 5).is_err());
    }
}
