//! Bilinear, edge-clamped resampling with an explicit adjoint.

use super::grid::{lerp, ImageGrid};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output length for scaling `n` by `factor` (round half up).
pub fn scaled_dim(n: usize, factor: f64) -> usize {
    (n as f64 * factor + 0.5).floor() as usize
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f64,
}

fn axis_taps(n_in: usize, n_out: usize) -> Vec<Tap> {
    let ratio = n_in as f64 / n_out as f64;
    let max = (n_in - 1) as f64;
    (0..n_out)
        .map(|o| {
            // pixel centers aligned
            let src = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, max);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            Tap {
                i0,
                i1,
                frac: src - i0 as f64,
            }
        })
        .collect()
}

/// Precomputed bilinear map between two grid sizes.
///
/// The same operator drives image resampling and the fixed upsampling of
/// side outputs inside the network, whose backward pass uses [`Resampler::adjoint_plane`].
#[derive(Debug, Clone)]
pub struct Resampler {
    in_w: usize,
    in_h: usize,
    out_w: usize,
    out_h: usize,
    xs: Vec<Tap>,
    ys: Vec<Tap>,
}

impl Resampler {
    pub fn new(in_w: usize, in_h: usize, out_w: usize, out_h: usize) -> Result<Self> {
        if in_w == 0 || in_h == 0 || out_w == 0 || out_h == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot resample {in_w}x{in_h} to {out_w}x{out_h}"
            )));
        }
        Ok(Self {
            in_w,
            in_h,
            out_w,
            out_h,
            xs: axis_taps(in_w, out_w),
            ys: axis_taps(in_h, out_h),
        })
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.in_w, self.in_h)
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.out_w, self.out_h)
    }

    pub fn is_identity(&self) -> bool {
        self.in_w == self.out_w && self.in_h == self.out_h
    }

    /// Resample one plane (`in_w * in_h` values) into `dst` (`out_w * out_h`).
    pub fn apply_plane<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        debug_assert_eq!(src.len(), self.in_w * self.in_h);
        debug_assert_eq!(dst.len(), self.out_w * self.out_h);
        for (oy, ty) in self.ys.iter().enumerate() {
            let fy = T::lit(ty.frac);
            let r0 = &src[ty.i0 * self.in_w..(ty.i0 + 1) * self.in_w];
            let r1 = &src[ty.i1 * self.in_w..(ty.i1 + 1) * self.in_w];
            let out = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
            for (o, tx) in out.iter_mut().zip(&self.xs) {
                let fx = T::lit(tx.frac);
                let top = lerp(r0[tx.i0], r0[tx.i1], fx);
                let bot = lerp(r1[tx.i0], r1[tx.i1], fx);
                *o = lerp(top, bot, fy);
            }
        }
    }

    /// Accumulate the transpose of [`Self::apply_plane`] applied to `grad_out` into `grad_in`.
    pub fn adjoint_plane<T: Scalar>(&self, grad_out: &[T], grad_in: &mut [T]) {
        debug_assert_eq!(grad_out.len(), self.out_w * self.out_h);
        debug_assert_eq!(grad_in.len(), self.in_w * self.in_h);
        for (oy, ty) in self.ys.iter().enumerate() {
            let fy = T::lit(ty.frac);
            let gy0 = T::one() - fy;
            for (ox, tx) in self.xs.iter().enumerate() {
                let g = grad_out[oy * self.out_w + ox];
                let fx = T::lit(tx.frac);
                let gx0 = T::one() - fx;
                grad_in[ty.i0 * self.in_w + tx.i0] += g * gx0 * gy0;
                grad_in[ty.i0 * self.in_w + tx.i1] += g * fx * gy0;
                grad_in[ty.i1 * self.in_w + tx.i0] += g * gx0 * fy;
                grad_in[ty.i1 * self.in_w + tx.i1] += g * fx * fy;
            }
        }
    }

    /// Resample every channel of `img`.
    pub fn apply<T: Scalar>(&self, img: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        if img.dims() != (self.in_w, self.in_h) {
            return Err(Error::DimensionMismatch(format!(
                "resampler expects {}x{}, got {}x{}",
                self.in_w,
                self.in_h,
                img.width(),
                img.height()
            )));
        }
        let c = img.channels();
        if c == 1 {
            let mut out = vec![T::zero(); self.out_w * self.out_h];
            self.apply_plane(img.data(), &mut out);
            return ImageGrid::new(self.out_w, self.out_h, 1, out);
        }
        let planes = (0..c)
            .map(|ch| {
                let plane = img.channel(ch)?;
                let mut out = vec![T::zero(); self.out_w * self.out_h];
                self.apply_plane(plane.data(), &mut out);
                ImageGrid::new(self.out_w, self.out_h, 1, out)
            })
            .collect::<Result<Vec<_>>>()?;
        ImageGrid::from_planes(&planes)
    }
}

/// Scale an image by `factor`; output dims are `round(dims * factor)`.
pub fn resample<T: Scalar>(img: &ImageGrid<T>, factor: f64) -> Result<ImageGrid<T>> {
    let (w, h) = img.dims();
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidFactor {
            factor,
            width: w,
            height: h,
        });
    }
    let (ow, oh) = (scaled_dim(w, factor), scaled_dim(h, factor));
    if ow == 0 || oh == 0 {
        return Err(Error::InvalidFactor {
            factor,
            width: w,
            height: h,
        });
    }
    resize(img, ow, oh)
}

/// Resample to explicit output dims.
pub fn resize<T: Scalar>(img: &ImageGrid<T>, width: usize, height: usize) -> Result<ImageGrid<T>> {
    Resampler::new(img.width(), img.height(), width, height)?.apply(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_preserved() {
        let img = ImageGrid::filled(7, 5, 1, 0.5f64).unwrap();
        let half = resample(&img, 0.5).unwrap();
        assert_eq!(half.dims(), (4, 3));
        assert!(half.data().iter().all(|&v| v == 0.5));
        let odd = resample(&img, 1.37).unwrap();
        assert!(odd.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn dimension_round_trip() {
        let img = ImageGrid::from_fn(4, 4, |x, y| (x * y) as f64).unwrap();
        let up = resample(&img, 2.0).unwrap();
        assert_eq!(up.dims(), (8, 8));
        assert_eq!(resample(&up, 0.5).unwrap().dims(), (4, 4));
    }

    #[test]
    fn two_by_two_upsample_matches_hand_bilinear() {
        // [[0,1],[0,1]]: value depends on x only.
        let img = ImageGrid::<f64>::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = resample(&img, 2.0).unwrap();
        // output x -> source (x + 0.5)/2 - 0.5 clamped to [0, 1]: 0, 0.25, 0.75, 1
        let expect = [0.0, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                assert!((up.get(x, y) - expect[x]).abs() < 1e-15);
            }
        }
        // centre sample of the 2x2 image is the mean of all four
        assert!((img.sample_bilinear(0.5, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_output_is_invalid_factor() {
        let img = ImageGrid::filled(3, 3, 1, 1.0f64).unwrap();
        assert!(matches!(resample(&img, 0.1), Err(Error::InvalidFactor { .. })));
        assert!(matches!(resample(&img, 0.0), Err(Error::InvalidFactor { .. })));
        assert!(matches!(resample(&img, -1.0), Err(Error::InvalidFactor { .. })));
    }

    #[test]
    fn identity_factor_is_exact() {
        let img = ImageGrid::from_fn(5, 3, |x, y| (x as f64).sin() + y as f64 * 0.1).unwrap();
        assert_eq!(resample(&img, 1.0).unwrap(), img);
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity() {
        let r = Resampler::new(5, 4, 9, 7).unwrap();
        let a: Vec<f64> = (0..20).map(|i| ((i * 7 % 11) as f64) * 0.1 - 0.3).collect();
        let b: Vec<f64> = (0..63).map(|i| ((i * 5 % 13) as f64) * 0.07 - 0.2).collect();
        let mut ra = vec![0.0; 63];
        r.apply_plane(&a, &mut ra);
        let mut rtb = vec![0.0; 20];
        r.adjoint_plane(&b, &mut rtb);
        let lhs: f64 = ra.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(&rtb).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn multichannel_resamples_each_channel() {
        let img = ImageGrid::new(2, 1, 2, vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        let up = resize(&img, 4, 1).unwrap();
        assert_eq!(up.channels(), 2);
        assert!(up.channel(1).unwrap().data().iter().all(|&v| v == 1.0));
    }
}
