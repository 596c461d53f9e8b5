use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major image or score map with interleaved channels.
///
/// Sample `(x, y, c)` lives at `((y * width) + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageGrid<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidDimensions {
                width,
                height,
                channels,
            });
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::DataLength {
                width,
                height,
                channels,
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, T::zero())
    }

    /// Single-channel grid from a closure over `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    /// Stack single-channel planes into one interleaved grid.
    pub fn from_planes(planes: &[ImageGrid<T>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidArgument("no planes to stack".into()))?;
        let (w, h) = first.dims();
        let c: usize = planes.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(w * h * c);
        for p in planes {
            if p.dims() != (w, h) {
                return Err(Error::DimensionMismatch(format!(
                    "plane {}x{} vs {}x{}",
                    p.width, p.height, w, h
                )));
            }
        }
        for i in 0..w * h {
            for p in planes {
                data.extend_from_slice(&p.data[i * p.channels..(i + 1) * p.channels]);
            }
        }
        Self::new(w, h, c, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[(y * self.width + x) * self.channels]
    }
    #[inline]
    pub fn get_c(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        let i = (y * self.width + x) * self.channels;
        self.data[i] = v;
    }
    #[inline]
    pub fn set_c(&mut self, x: usize, y: usize, c: usize, v: T) {
        let i = (y * self.width + x) * self.channels + c;
        self.data[i] = v;
    }

    /// Pixel values at the clamped location.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc)
    }

    /// Bilinear sample of channel 0 at a real-valued position, edge-clamped.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> T {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let xc = x.clamp(0.0, xm);
        let yc = y.clamp(0.0, ym);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = T::lit(xc - x0 as f64);
        let fy = T::lit(yc - y0 as f64);
        let top = lerp(self.get(x0, y0), self.get(x1, y0), fx);
        let bot = lerp(self.get(x0, y1), self.get(x1, y1), fx);
        lerp(top, bot, fy)
    }

    /// Extract one channel as a single-channel grid.
    pub fn channel(&self, c: usize) -> Result<ImageGrid<T>> {
        if c >= self.channels {
            return Err(Error::InvalidArgument(format!(
                "channel {c} out of range for {} channels",
                self.channels
            )));
        }
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        ImageGrid::new(self.width, self.height, 1, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> ImageGrid<T> {
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Convert to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ImageGrid<U> {
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn ensure_same_shape(&self, other: &ImageGrid<T>, what: &str) -> Result<()> {
        if self.width != other.width || self.height != other.height || self.channels != other.channels {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    /// RGB to luma; single-channel input is returned unchanged.
    pub fn to_luma(&self) -> Result<ImageGrid<T>> {
        match self.channels {
            1 => Ok(self.clone()),
            3 => {
                let w = super::LUMA_WEIGHTS.map(T::lit);
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|p| w[0] * p[0] + w[1] * p[1] + w[2] * p[2])
                    .collect();
                ImageGrid::new(self.width, self.height, 1, data)
            }
            c => Err(Error::InvalidArgument(format!("cannot convert {c}-channel image to luma"))),
        }
    }

    /// Gray to RGB by replication; RGB input is returned unchanged.
    pub fn to_rgb(&self) -> Result<ImageGrid<T>> {
        match self.channels {
            3 => Ok(self.clone()),
            1 => {
                let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
                ImageGrid::new(self.width, self.height, 3, data)
            }
            c => Err(Error::InvalidArgument(format!("cannot convert {c}-channel image to RGB"))),
        }
    }

    /// Min and max over all samples.
    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[inline]
pub(crate) fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    a + t * (b - a)
}

/// Binary pixel map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions {
                width,
                height,
                channels: 1,
            });
        }
        if bits.len() != width * height {
            return Err(Error::DataLength {
                width,
                height,
                channels: 1,
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    /// Interpret a single-channel grid whose values must be exactly 0 or 1.
    pub fn from_binary_grid<T: Scalar>(grid: &ImageGrid<T>) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::InvalidArgument("binary map must have one channel".into()));
        }
        let mut bits = Vec::with_capacity(grid.pixel_count());
        for (index, &v) in grid.data().iter().enumerate() {
            if v == T::one() {
                bits.push(true);
            } else if v == T::zero() {
                bits.push(false);
            } else {
                return Err(Error::NotBinary {
                    index,
                    value: v.as_f64(),
                });
            }
        }
        Self::new(grid.width(), grid.height(), bits)
    }

    /// Pixels whose value is at least `threshold`.
    pub fn threshold<T: Scalar>(grid: &ImageGrid<T>, threshold: T) -> Mask {
        Mask {
            width: grid.width(),
            height: grid.height(),
            bits: grid.data().iter().step_by(grid.channels()).map(|&v| v >= threshold).collect(),
        }
    }

    pub fn to_grid<T: Scalar>(&self) -> ImageGrid<T> {
        let data = self.bits.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
        ImageGrid::new(self.width, self.height, 1, data).expect("mask dims are valid")
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }
    #[inline]
    pub fn at(&self, index: usize) -> bool {
        self.bits[index]
    }
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of set pixels in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// `self AND NOT other`.
    pub fn minus(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect(),
        }
    }
}

/// Per-annotator boundary maps for one image plus an optional don't-care mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    width: usize,
    height: usize,
    annotators: Vec<Mask>,
    dontcare: Option<Mask>,
}

impl AnnotationSet {
    pub fn new(width: usize, height: usize, annotators: Vec<Mask>, dontcare: Option<Mask>) -> Result<Self> {
        for (i, a) in annotators.iter().enumerate() {
            if a.dims() != (width, height) {
                return Err(Error::DimensionMismatch(format!(
                    "annotator {i} is {}x{}, expected {width}x{height}",
                    a.width(),
                    a.height()
                )));
            }
        }
        if let Some(dc) = &dontcare {
            if dc.dims() != (width, height) {
                return Err(Error::DimensionMismatch(format!(
                    "don't-care mask is {}x{}, expected {width}x{height}",
                    dc.width(),
                    dc.height()
                )));
            }
        }
        Ok(Self {
            width,
            height,
            annotators,
            dontcare,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn annotators(&self) -> &[Mask] {
        &self.annotators
    }
    pub fn dontcare(&self) -> Option<&Mask> {
        self.dontcare.as_ref()
    }
    pub fn is_dontcare(&self, index: usize) -> bool {
        self.dontcare.as_ref().is_some_and(|m| m.at(index))
    }
}
