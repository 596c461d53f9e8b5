//! Seeded synthetic shapes dataset: random ellipses and polygons over a
//! textured background, exact region boundaries, and several annotators whose
//! tracings are jittered copies of the true shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{AnnotationSet, ImageGrid, Mask};

/// Smallest difference between the mean levels of any two regions.
pub const MIN_CONTRAST: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub width: usize,
    pub height: usize,
    pub annotators: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Standard deviation, in pixels, of each annotator's shape displacement.
    pub jitter: f64,
    /// Probability that an annotator leaves out a shape.
    pub omit: f64,
    /// Peak amplitude of the in-region stripe texture.
    pub texture: f64,
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            annotators: 3,
            min_shapes: 2,
            max_shapes: 5,
            jitter: 0.6,
            omit: 0.1,
            texture: 0.05,
            noise: 0.03,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidArgument("synthetic images must be at least 8x8".into()));
        }
        if self.annotators == 0 || self.min_shapes == 0 || self.min_shapes > self.max_shapes {
            return Err(Error::InvalidArgument("need at least one annotator and 1 <= min_shapes <= max_shapes".into()));
        }
        if !(0.0..1.0).contains(&self.omit) || self.jitter < 0.0 || self.texture < 0.0 || self.noise < 0.0 {
            return Err(Error::InvalidArgument("synthetic noise parameters out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outline {
    Ellipse { rx: f64, ry: f64 },
    /// Star-shaped polygon: vertex radii at evenly spaced angles.
    Polygon { radii: [f64; 8], n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Shape {
    cx: f64,
    cy: f64,
    angle: f64,
    scale: f64,
    outline: Outline,
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.angle.sin_cos();
        let u = (c * dx + s * dy) / self.scale;
        let v = (-s * dx + c * dy) / self.scale;
        match self.outline {
            Outline::Ellipse { rx, ry } => (u / rx).powi(2) + (v / ry).powi(2) <= 1.0,
            Outline::Polygon { radii, n } => {
                let r = u.hypot(v);
                if r == 0.0 {
                    return true;
                }
                let step = std::f64::consts::TAU / n as f64;
                let a = v.atan2(u).rem_euclid(std::f64::consts::TAU);
                let k = ((a / step).floor() as usize).min(n - 1);
                let (a0, a1) = (k as f64 * step, (k + 1) as f64 * step);
                let (r0, r1) = (radii[k], radii[(k + 1) % n]);
                // edge between the two vertices, in polar form along this ray
                let (p0, p1) = ((r0 * a0.cos(), r0 * a0.sin()), (r1 * a1.cos(), r1 * a1.sin()));
                let (ex, ey) = (p1.0 - p0.0, p1.1 - p0.1);
                let (dxr, dyr) = (a.cos(), a.sin());
                let denom = dxr * ey - dyr * ex;
                let t = (p0.0 * ey - p0.1 * ex) / denom;
                r <= t
            }
        }
    }

    fn jittered(&self, rng: &mut ChaCha8Rng, sd: f64) -> Shape {
        let mut s = *self;
        s.cx += sd * gaussian(rng);
        s.cy += sd * gaussian(rng);
        s.scale *= 1.0 + 0.5 * sd * gaussian(rng) / self.size().max(1.0);
        s
    }

    fn size(&self) -> f64 {
        self.scale
            * match self.outline {
                Outline::Ellipse { rx, ry } => rx.max(ry),
                Outline::Polygon { radii, n } => radii[..n].iter().copied().fold(0.0, f64::max),
            }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Region label per pixel; later shapes cover earlier ones, 0 is background.
fn rasterize(shapes: &[Option<Shape>], w: usize, h: usize) -> Vec<u32> {
    let mut lab = vec![0u32; w * h];
    for (k, s) in shapes.iter().enumerate() {
        let Some(s) = s else { continue };
        for y in 0..h {
            for x in 0..w {
                if s.contains(x as f64, y as f64) {
                    lab[y * w + x] = k as u32 + 1;
                }
            }
        }
    }
    lab
}

/// A pixel is on the boundary when its label differs from the pixel to its
/// right or below.
pub fn label_boundaries(labels: &[u32], w: usize, h: usize) -> Result<Mask> {
    if labels.len() != w * h {
        return Err(Error::DimensionMismatch("label map size".into()));
    }
    Mask::from_fn(w, h, |x, y| {
        let l = labels[y * w + x];
        (x + 1 < w && labels[y * w + x + 1] != l) || (y + 1 < h && labels[(y + 1) * w + x] != l)
    })
}

/// Reduce a one-pixel-wide 4-connected boundary to an 8-connected one.
///
/// Pixels are visited in raster order and removed, in place, when they sit at
/// an L corner (exactly one horizontal and one vertical 4-neighbour on) and their
/// boundary neighbours stay 8-connected to each other without them.
pub fn thin_boundary(mask: &Mask) -> Mask {
    const RING: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    let (w, h) = mask.dims();
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            if !out.get(x, y) {
                continue;
            }
            let on: Vec<(isize, isize)> = RING
                .iter()
                .copied()
                .filter(|&(dx, dy)| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && out.get(nx as usize, ny as usize)
                })
                .collect();
            let horizontal = on.contains(&(-1, 0)) as u8 + on.contains(&(1, 0)) as u8;
            let vertical = on.contains(&(0, -1)) as u8 + on.contains(&(0, 1)) as u8;
            if (horizontal, vertical) != (1, 1) {
                continue;
            }
            // flood fill over the neighbours alone
            let mut seen = vec![false; on.len()];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(a) = stack.pop() {
                for b in 0..on.len() {
                    if !seen[b] && (on[a].0 - on[b].0).abs() <= 1 && (on[a].1 - on[b].1).abs() <= 1 {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
            if seen.iter().all(|&s| s) {
                out.set(x, y, false);
            }
        }
    }
    out
}

/// One generated image with its annotations.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub image: ImageGrid<f64>,
    pub labels: Vec<u32>,
    /// Boundary of the true label map.
    pub truth: Mask,
    pub annotations: AnnotationSet,
}

fn random_shape(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Shape {
    let m = w.min(h) as f64;
    let size = rng.random_range(0.12 * m..0.32 * m);
    let outline = if rng.random_bool(0.5) {
        Outline::Ellipse {
            rx: 1.0,
            ry: rng.random_range(0.45..1.0),
        }
    } else {
        let n = rng.random_range(3..=8);
        let mut radii = [0.0; 8];
        radii[..n].iter_mut().for_each(|r| *r = rng.random_range(0.6..1.0));
        Outline::Polygon { radii, n }
    };
    Shape {
        cx: rng.random_range(0.1 * w as f64..0.9 * w as f64),
        cy: rng.random_range(0.1 * h as f64..0.9 * h as f64),
        angle: rng.random_range(0.0..std::f64::consts::PI),
        scale: size,
        outline,
    }
}

/// Sample `index` of the dataset described by `cfg`. Every sample draws from
/// its own stream of the seeded generator, so samples can be produced in any
/// order or in parallel.
pub fn generate(cfg: &SyntheticConfig, index: u64) -> Result<SyntheticSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let (w, h) = (cfg.width, cfg.height);
    let count = rng.random_range(cfg.min_shapes..=cfg.max_shapes);
    let shapes: Vec<Shape> = (0..count).map(|_| random_shape(&mut rng, w, h)).collect();

    // region appearance: mean level plus an oriented stripe pattern
    let mut means: Vec<f64> = Vec::with_capacity(count + 1);
    for _ in 0..=count {
        let mut m = rng.random_range(0.1..0.9);
        for _ in 0..200 {
            if means.iter().all(|p| (p - m).abs() >= MIN_CONTRAST) {
                break;
            }
            m = rng.random_range(0.1..0.9);
        }
        means.push(m);
    }
    let stripes: Vec<(f64, f64, f64)> = (0..=count)
        .map(|_| {
            (
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(0.6..1.6),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();

    let truth_shapes: Vec<Option<Shape>> = shapes.iter().copied().map(Some).collect();
    let labels = rasterize(&truth_shapes, w, h);
    let mut raw = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x] as usize;
            let (theta, freq, phase) = stripes[l];
            let t = (x as f64 * theta.cos() + y as f64 * theta.sin()) * freq + phase;
            raw[y * w + x] = means[l] + cfg.texture * t.sin();
        }
    }
    // mild optical blur, then sensor noise
    let blurred = blur121(&raw, w, h);
    let data: Vec<f64> = blurred
        .iter()
        .map(|v| (v + cfg.noise * gaussian(&mut rng)).clamp(0.0, 1.0))
        .collect();
    let image = ImageGrid::new(w, h, 1, data)?;
    let truth = thin_boundary(&label_boundaries(&labels, w, h)?);

    let mut annotators = Vec::with_capacity(cfg.annotators);
    for _ in 0..cfg.annotators {
        let traced: Vec<Option<Shape>> = shapes
            .iter()
            .map(|s| (!rng.random_bool(cfg.omit)).then(|| s.jittered(&mut rng, cfg.jitter)))
            .collect();
        annotators.push(thin_boundary(&label_boundaries(&rasterize(&traced, w, h), w, h)?));
    }
    let annotations = AnnotationSet::new(w, h, annotators, None)?;
    Ok(SyntheticSample {
        image,
        labels,
        truth,
        annotations,
    })
}

fn blur121(v: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = v[y * w + x.saturating_sub(1)];
            let r = v[y * w + (x + 1).min(w - 1)];
            tmp[y * w + x] = 0.25 * l + 0.5 * v[y * w + x] + 0.25 * r;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let u = tmp[y.saturating_sub(1) * w + x];
            let d = tmp[(y + 1).min(h - 1) * w + x];
            out[y * w + x] = 0.25 * u + 0.5 * tmp[y * w + x] + 0.25 * d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_index() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg, 3).unwrap();
        let b = generate(&cfg, 3).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.annotations.annotators(), b.annotations.annotators());
        assert_ne!(generate(&cfg, 4).unwrap().image, a.image);
    }

    #[test]
    fn boundaries_follow_labels() {
        let labels = [0, 0, 1, 0, 0, 1, 2, 2, 2];
        let m = label_boundaries(&labels, 3, 3).unwrap();
        assert_eq!(m.bits(), &[false, true, false, true, true, true, false, false, false]);
    }

    #[test]
    fn staircase_becomes_diagonal() {
        // 4-connected staircase from (0,0) to (3,3)
        let stair = [(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3)];
        let m = Mask::from_fn(5, 5, |x, y| stair.contains(&(x, y))).unwrap();
        let t = thin_boundary(&m);
        assert_eq!(t.count(), 4);
        for k in 0..4 {
            assert!(t.get(k, k));
        }
        // straight lines, endpoints and a T junction are already thin
        let tee = Mask::from_fn(7, 5, |x, y| y == 1 || (x == 3 && y > 1)).unwrap();
        assert_eq!(thin_boundary(&tee), tee);
        let dot = Mask::from_fn(3, 3, |x, y| x == 1 && y == 1).unwrap();
        assert_eq!(thin_boundary(&dot), dot);
    }

    #[test]
    fn sample_shape() {
        let cfg = SyntheticConfig::default();
        let s = generate(&cfg, 0).unwrap();
        assert_eq!(s.image.dims(), (64, 64));
        assert_eq!(s.annotations.annotators().len(), 3);
        assert!(s.truth.count() > 20);
        assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn polygon_contains_centre_not_far_points() {
        let s = Shape {
            cx: 10.0,
            cy: 10.0,
            angle: 0.3,
            scale: 5.0,
            outline: Outline::Polygon {
                radii: [1.0, 0.8, 0.9, 1.0, 0.7, 0.0, 0.0, 0.0],
                n: 5,
            },
        };
        assert!(s.contains(10.0, 10.0));
        assert!(s.contains(11.0, 10.5));
        assert!(!s.contains(16.0, 10.0));
        assert!(!s.contains(10.0, 3.0));
    }
}
