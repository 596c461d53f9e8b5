use crate::imagecore::ImageGrid;
use crate::scalar::Scalar;

fn smooth(v: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| v[(y.clamp(0, h as isize - 1) as usize) * w + x.clamp(0, w as isize - 1) as usize];
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            tmp[y * w + x] = 0.25 * at(xi - 1, yi) + 0.5 * at(xi, yi) + 0.25 * at(xi + 1, yi);
        }
    }
    let at = |x: usize, y: isize| tmp[(y.clamp(0, h as isize - 1) as usize) * w + x];
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let yi = y as isize;
            out[y * w + x] = 0.25 * at(x, yi - 1) + 0.5 * at(x, yi) + 0.25 * at(x, yi + 1);
        }
    }
    out
}

/// Central differences with clamped indices: `(d/dx, d/dy)`.
fn gradient(v: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            gx[y * w + x] = 0.5 * (v[y * w + (x + 1).min(w - 1)] - v[y * w + x.saturating_sub(1)]);
            gy[y * w + x] = 0.5 * (v[(y + 1).min(h - 1) * w + x] - v[y.saturating_sub(1) * w + x]);
        }
    }
    (gx, gy)
}

/// Boundary-normal angle per pixel, from second central differences of the
/// smoothed map: the direction of strongest curvature, which is across a ridge.
pub fn normal_orientation<T: Scalar>(pb: &ImageGrid<T>) -> Vec<f64> {
    let (w, h) = pb.dims();
    let v: Vec<f64> = pb.data().iter().map(|x| x.as_f64()).collect();
    let s = smooth(&v, w, h);
    let (gx, gy) = gradient(&s, w, h);
    let (hxx, hxy) = gradient(&gx, w, h);
    let (_, hyy) = gradient(&gy, w, h);
    (0..w * h)
        .map(|i| 0.5 * (2.0 * hxy[i]).atan2(hxx[i] - hyy[i]) + std::f64::consts::FRAC_PI_2)
        .collect()
}

/// Differences below this count as ties in [`nms_thin`].
pub const NMS_TOLERANCE: f64 = 1e-12;

/// Thin a boundary map: a pixel keeps its value iff it is `>=` both bilinear
/// neighbours one pixel away along the boundary normal and strictly greater
/// than at least one of them. Everything else becomes 0.
pub fn nms_thin<T: Scalar>(pb: &ImageGrid<T>) -> ImageGrid<T> {
    let (w, h) = pb.dims();
    let theta = normal_orientation(pb);
    let mut out = pb.map(|_| T::zero());
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = pb.get(x, y);
            let snap = |c: f64| if c.abs() < 1e-12 { 0.0 } else { c };
            let (dx, dy) = (snap(theta[i].cos()), snap(theta[i].sin()));
            let a = pb.sample_bilinear(x as f64 + dx, y as f64 + dy);
            let b = pb.sample_bilinear(x as f64 - dx, y as f64 - dy);
            let tol = T::lit(NMS_TOLERANCE);
            if v + tol >= a && v + tol >= b && (v > a + tol || v > b + tol) {
                out.set(x, y, v);
            }
        }
    }
    out
}
