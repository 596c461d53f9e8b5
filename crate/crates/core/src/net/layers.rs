//! Planar (channel-major) convolution, ReLU and 2x2 max-pool kernels.

use crate::scalar::Scalar;

/// Planar feature tensor: `channels` planes of `width * height`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Planes<T> {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Planes<T> {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![T::zero(); channels * width * height],
        }
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Valid output range `[lo, hi)` for an offset `off` so that `i + off` stays in `[0, n)`.
#[inline]
fn valid_range(n: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n as isize - off).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

/// Zero-padded "same" convolution (cross-correlation), weights `[out][in][k][k]`.
pub(crate) fn conv_forward<T: Scalar>(input: &Planes<T>, weight: &[T], bias: &[T], c_out: usize, k: usize) -> Planes<T> {
    let (w, h, c_in) = (input.width, input.height, input.channels);
    let pad = (k / 2) as isize;
    let mut out = Planes::zeros(c_out, w, h);
    for co in 0..c_out {
        let o = out.plane_mut(co);
        o.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..c_in {
            let src = input.plane(ci);
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let wt = weight[((co * c_in + ci) * k + ky) * k + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let srow = &src[sy * w..(sy + 1) * w];
                        let orow = &mut o[y * w..(y + 1) * w];
                        for x in x0..x1 {
                            orow[x] += wt * srow[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulate weight/bias gradients and (optionally) the input gradient of [`conv_forward`].
pub(crate) fn conv_backward<T: Scalar>(
    input: &Planes<T>,
    weight: &[T],
    grad_out: &Planes<T>,
    k: usize,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    mut grad_input: Option<&mut Planes<T>>,
) {
    let (w, h, c_in) = (input.width, input.height, input.channels);
    let c_out = grad_out.channels;
    let pad = (k / 2) as isize;
    for co in 0..c_out {
        let g = grad_out.plane(co);
        grad_bias[co] += g.iter().copied().sum::<T>();
        for ci in 0..c_in {
            let src = input.plane(ci);
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let widx = ((co * c_in + ci) * k + ky) * k + kx;
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        for x in x0..x1 {
                            acc += g[y * w + x] * src[sy * w + (x as isize + dx) as usize];
                        }
                    }
                    grad_weight[widx] += acc;
                    if let Some(gi) = grad_input.as_deref_mut() {
                        let wt = weight[widx];
                        let gin = gi.plane_mut(ci);
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            for x in x0..x1 {
                                gin[sy * w + (x as isize + dx) as usize] += wt * g[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn relu<T: Scalar>(pre: &Planes<T>) -> Planes<T> {
    Planes {
        channels: pre.channels,
        width: pre.width,
        height: pre.height,
        data: pre.data.iter().map(|&v| v.max(T::zero())).collect(),
    }
}

/// 2x2 max-pool with stride 2; odd edges use the partial window. Returns argmax offsets.
pub(crate) fn maxpool2<T: Scalar>(input: &Planes<T>) -> (Planes<T>, Vec<usize>) {
    let (w, h) = (input.width, input.height);
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Planes::zeros(input.channels, ow, oh);
    let mut arg = vec![0usize; input.channels * ow * oh];
    for c in 0..input.channels {
        let src = input.plane(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = T::neg_infinity();
                let mut best_i = 0;
                // first maximum in raster order wins ties
                for yy in 2 * oy..(2 * oy + 2).min(h) {
                    for xx in 2 * ox..(2 * ox + 2).min(w) {
                        let v = src[yy * w + xx];
                        if v > best {
                            best = v;
                            best_i = yy * w + xx;
                        }
                    }
                }
                let o = c * ow * oh + oy * ow + ox;
                out.data[o] = best;
                arg[o] = best_i;
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward<T: Scalar>(grad_out: &Planes<T>, arg: &[usize], in_w: usize, in_h: usize) -> Planes<T> {
    let mut gi = Planes::zeros(grad_out.channels, in_w, in_h);
    let n_out = grad_out.plane_len();
    for c in 0..grad_out.channels {
        let g = grad_out.plane(c);
        let a = &arg[c * n_out..(c + 1) * n_out];
        let dst = gi.plane_mut(c);
        for (gv, &ai) in g.iter().zip(a) {
            dst[ai] += *gv;
        }
    }
    gi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel() {
        let input = Planes {
            channels: 1,
            width: 3,
            height: 2,
            data: vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        let mut wt = vec![0.0; 9];
        wt[4] = 1.0;
        let out = conv_forward(&input, &wt, &[0.5], 1, 3);
        assert_eq!(out.data, vec![1.5, 2.5, 3.5, 4.5, 5.5, 6.5]);
    }

    #[test]
    fn conv_zero_padding_at_borders() {
        let input = Planes {
            channels: 1,
            width: 2,
            height: 1,
            data: vec![1.0f64, 10.0],
        };
        // out[x] = in[x-1] + in[x+1]
        let wt = vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let out = conv_forward(&input, &wt, &[0.0], 1, 3);
        assert_eq!(out.data, vec![10.0, 1.0]);
    }

    #[test]
    fn maxpool_odd_dims_and_ties() {
        let input = Planes {
            channels: 1,
            width: 3,
            height: 1,
            data: vec![2.0f64, 2.0, -1.0],
        };
        let (out, arg) = maxpool2(&input);
        assert_eq!((out.width, out.height), (2, 1));
        assert_eq!(out.data, vec![2.0, -1.0]);
        assert_eq!(arg, vec![0, 2]);
        let g = Planes {
            channels: 1,
            width: 2,
            height: 1,
            data: vec![1.0, 3.0],
        };
        assert_eq!(maxpool2_backward(&g, &arg, 3, 1).data, vec![1.0, 0.0, 3.0]);
    }
}
