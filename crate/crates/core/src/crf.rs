//! Fully connected CRF over pixel labels with a bilateral plus spatial Gaussian
//! pairwise kernel and Potts compatibility. Inference is exact parallel mean
//! field with O(N^2) message sums, limited to small images.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::ImageGrid;
use crate::ncuts::EigenEmbedding;
use crate::scalar::Scalar;

/// Default pixel cap for exact inference (64 x 64).
pub const DEFAULT_PIXEL_CAP: usize = 64 * 64;

/// Kernel weights and bandwidths.
///
/// Positions are in pixels; appearance differences are multiplied by
/// `appearance_scale` before the bilateral term, so 255 gives 8-bit units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairwiseParams {
    pub w1: f64,
    pub w2: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub sigma_gamma: f64,
    pub appearance_scale: f64,
}

impl Default for PairwiseParams {
    fn default() -> Self {
        Self {
            w1: 4.0,
            w2: 3.0,
            sigma_alpha: 49.0,
            sigma_beta: 5.0,
            sigma_gamma: 3.0,
            appearance_scale: 255.0,
        }
    }
}

impl PairwiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return Err(Error::InvalidArgument("kernel weights must be >= 0".into()));
        }
        if !(self.sigma_alpha > 0.0 && self.sigma_beta > 0.0 && self.sigma_gamma > 0.0) {
            return Err(Error::InvalidArgument("kernel bandwidths must be > 0".into()));
        }
        if !(self.appearance_scale > 0.0) {
            return Err(Error::InvalidArgument("appearance scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-pixel appearance vectors in [0, 1]: RGB, optionally followed by three
/// eigenvector channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    width: usize,
    height: usize,
    dim: usize,
    appearance: Vec<f64>,
}

impl FeatureImage {
    pub fn new(width: usize, height: usize, dim: usize, appearance: Vec<f64>) -> Result<Self> {
        if dim != 3 && dim != 6 {
            return Err(Error::InvalidArgument(format!("appearance dimension must be 3 or 6, got {dim}")));
        }
        if width == 0 || height == 0 || appearance.len() != width * height * dim {
            return Err(Error::DataLength {
                width,
                height,
                channels: dim,
                expected: width * height * dim,
                got: appearance.len(),
            });
        }
        if appearance.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("appearance channels must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            dim,
            appearance,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, i: usize) -> (f64, f64) {
        ((i % self.width) as f64, (i / self.width) as f64)
    }

    pub fn appearance(&self, i: usize) -> &[f64] {
        &self.appearance[i * self.dim..(i + 1) * self.dim]
    }
}

/// RGB-only features; a one-channel image is replicated to three.
pub fn rgb_features<T: Scalar>(img: &ImageGrid<T>) -> Result<FeatureImage> {
    let rgb = img.to_rgb()?;
    let data = rgb.data().iter().map(|v| v.as_f64()).collect();
    FeatureImage::new(rgb.width(), rgb.height(), 3, data)
}

/// RGB followed by the first three nontrivial eigenvectors, each rescaled to [0, 1].
pub fn augment_features<T: Scalar>(img: &ImageGrid<T>, emb: &EigenEmbedding) -> Result<FeatureImage> {
    let rgb = img.to_rgb()?;
    if emb.dims != Some(rgb.dims()) {
        return Err(Error::DimensionMismatch("embedding and image sizes differ".into()));
    }
    let picked: Vec<usize> = emb.nontrivial().take(3).collect();
    if picked.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need 3 nontrivial eigenvectors, embedding has {}",
            picked.len()
        )));
    }
    let mut chans = Vec::with_capacity(3);
    for &k in &picked {
        let v = &emb.vectors[k];
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if !(hi > lo) {
            return Err(Error::DegenerateGraph(format!("eigenvector {k} is constant")));
        }
        chans.push(v.iter().map(|x| (x - lo) / (hi - lo)).collect::<Vec<_>>());
    }
    let n = rgb.pixel_count();
    let mut data = Vec::with_capacity(n * 6);
    for i in 0..n {
        data.extend(rgb.data()[i * 3..i * 3 + 3].iter().map(|v| v.as_f64()));
        data.extend(chans.iter().map(|c| c[i]));
    }
    FeatureImage::new(rgb.width(), rgb.height(), 6, data)
}

/// `w1 exp(-|dp|^2 / 2 sa^2 - |dI|^2 / 2 sb^2) + w2 exp(-|dp|^2 / 2 sg^2)`.
pub fn pairwise_kernel(i: usize, j: usize, feat: &FeatureImage, pp: &PairwiseParams) -> f64 {
    let (xi, yi) = feat.position(i);
    let (xj, yj) = feat.position(j);
    let dp2 = (xi - xj).powi(2) + (yi - yj).powi(2);
    let s = pp.appearance_scale;
    let di2: f64 = feat
        .appearance(i)
        .iter()
        .zip(feat.appearance(j))
        .map(|(a, b)| (s * (a - b)).powi(2))
        .sum();
    pp.w1 * (-dp2 / (2.0 * pp.sigma_alpha.powi(2)) - di2 / (2.0 * pp.sigma_beta.powi(2))).exp()
        + pp.w2 * (-dp2 / (2.0 * pp.sigma_gamma.powi(2))).exp()
}

/// Per-pixel label distributions, `labels` channels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    probs: ImageGrid<f64>,
}

impl UnaryField {
    /// Rows must be nonnegative and sum to 1 within 1e-6.
    pub fn new(probs: ImageGrid<f64>) -> Result<Self> {
        for (i, row) in probs.data().chunks_exact(probs.channels()).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!("pixel {i} is not a distribution")));
            }
        }
        Ok(Self { probs })
    }

    /// Clamp negatives to 0 and divide each row by its sum.
    pub fn normalized(mut probs: ImageGrid<f64>) -> Result<Self> {
        let c = probs.channels();
        for (i, row) in probs.data_mut().chunks_exact_mut(c).enumerate() {
            row.iter_mut().for_each(|p| *p = p.max(0.0));
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::InvalidArgument(format!("pixel {i} has no probability mass")));
            }
            row.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { probs })
    }

    /// Two labels from a boundary probability map: `[1 - p, p]`.
    pub fn from_binary<T: Scalar>(p: &ImageGrid<T>) -> Result<Self> {
        if p.channels() != 1 {
            return Err(Error::InvalidArgument("binary unaries need a one-channel map".into()));
        }
        let data = p
            .data()
            .iter()
            .flat_map(|v| {
                let v = v.as_f64().clamp(0.0, 1.0);
                [1.0 - v, v]
            })
            .collect();
        Self::new(ImageGrid::new(p.width(), p.height(), 2, data)?)
    }

    pub fn labels(&self) -> usize {
        self.probs.channels()
    }

    pub fn len(&self) -> usize {
        self.probs.pixel_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.probs.dims()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let l = self.labels();
        &self.probs.data()[i * l..(i + 1) * l]
    }

    pub fn grid(&self) -> &ImageGrid<f64> {
        &self.probs
    }

    pub fn into_grid(self) -> ImageGrid<f64> {
        self.probs
    }

    /// Most probable label per pixel; the lowest label wins ties.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| {
                self.row(i)
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bl, bv), (l, &v)| if v > bv { (l, v) } else { (bl, bv) })
                    .0
            })
            .collect()
    }
}

fn check_shapes(unaries: &UnaryField, feat: &FeatureImage) -> Result<()> {
    if unaries.dims() != feat.dims() {
        return Err(Error::DimensionMismatch("unaries and features differ in size".into()));
    }
    Ok(())
}

/// `sum_i -log P_i(x_i) + sum_{i<j} k(i, j) [x_i != x_j]`.
pub fn energy(labeling: &[usize], unaries: &UnaryField, feat: &FeatureImage, pp: &PairwiseParams) -> Result<f64> {
    check_shapes(unaries, feat)?;
    if labeling.len() != unaries.len() || labeling.iter().any(|&l| l >= unaries.labels()) {
        return Err(Error::InvalidArgument("labeling does not fit the unaries".into()));
    }
    let mut e: f64 = labeling.iter().enumerate().map(|(i, &l)| -unaries.row(i)[l].ln()).sum();
    for i in 0..labeling.len() {
        for j in i + 1..labeling.len() {
            if labeling[i] != labeling[j] {
                e += pairwise_kernel(i, j, feat, pp);
            }
        }
    }
    Ok(e)
}

/// Parallel mean-field updates
/// `Q_i(l) ∝ P_i(l) exp(-sum_{j != i} k(i, j) (1 - Q_j(l)))`, starting from `Q = P`.
pub fn meanfield_infer(
    unaries: &UnaryField,
    feat: &FeatureImage,
    pp: &PairwiseParams,
    iters: usize,
    cap: usize,
) -> Result<UnaryField> {
    check_shapes(unaries, feat)?;
    pp.validate()?;
    let n = unaries.len();
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    let labels = unaries.labels();
    let log_p: Vec<f64> = unaries.probs.data().iter().map(|p| p.ln()).collect();
    let mut q = unaries.probs.data().to_vec();
    for _ in 0..iters {
        let prev = &q;
        let next: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut msg = vec![0.0; labels];
                for j in (0..n).filter(|&j| j != i) {
                    let k = pairwise_kernel(i, j, feat, pp);
                    for (m, qj) in msg.iter_mut().zip(&prev[j * labels..(j + 1) * labels]) {
                        *m += k * (1.0 - qj);
                    }
                }
                let a: Vec<f64> = (0..labels).map(|l| log_p[i * labels + l] - msg[l]).collect();
                let top = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = a.iter().map(|v| (v - top).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect()
            })
            .collect();
        q = next.concat();
    }
    let (w, h) = unaries.dims();
    Ok(UnaryField {
        probs: ImageGrid::new(w, h, labels, q)?,
    })
}

/// Settings of the CRF stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrfConfig {
    pub pairwise: PairwiseParams,
    pub iters: usize,
    pub pixel_cap: usize,
    /// Append three eigenvector channels to the appearance features.
    pub augment: bool,
}

impl Default for CrfConfig {
    fn default() -> Self {
        Self {
            pairwise: PairwiseParams::default(),
            iters: 5,
            pixel_cap: DEFAULT_PIXEL_CAP,
            augment: false,
        }
    }
}
