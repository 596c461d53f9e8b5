use std::path::Path;

use serde::{Deserialize, Serialize};

use super::affinity::intervening_contour;
use super::eigs::{generalized_eigs, EigenEmbedding, EigenOptions};
use crate::error::{Error, Result};
use crate::imagecore::{resample, resize, ImageGrid};
use crate::scalar::Scalar;

/// Settings of the spectral grouping stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NcutsConfig {
    /// Eigenvectors computed, the trivial one included.
    pub k: usize,
    pub radius: usize,
    pub sigma_ic: f64,
    /// Weight of the spectral map in the final fusion.
    pub gamma: f64,
    /// Solve on a half-resolution map and upsample the eigenvectors.
    pub downsample: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for NcutsConfig {
    fn default() -> Self {
        Self {
            k: 8,
            radius: 5,
            sigma_ic: 0.1,
            gamma: 0.3,
            downsample: false,
            tol: 1e-10,
            max_iter: 20_000,
            seed: 0,
        }
    }
}

impl NcutsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument("ncuts.k must be at least 2".into()));
        }
        if self.radius == 0 {
            return Err(Error::InvalidArgument("ncuts.radius must be at least 1".into()));
        }
        if !(self.sigma_ic > 0.0) {
            return Err(Error::InvalidArgument("ncuts.sigma_ic must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument("ncuts.gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            k: self.k,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
        }
    }
}

/// Eigenvectors as channels of one image, in eigenvalue order.
pub fn embedding_grid(emb: &EigenEmbedding) -> Result<ImageGrid<f64>> {
    let (w, h) = emb
        .dims
        .ok_or_else(|| Error::InvalidArgument("embedding has no pixel grid".into()))?;
    let k = emb.k();
    let mut data = vec![0.0; w * h * k];
    for (c, v) in emb.vectors.iter().enumerate() {
        if v.len() != w * h {
            return Err(Error::DimensionMismatch("eigenvector length".into()));
        }
        for (i, &x) in v.iter().enumerate() {
            data[i * k + c] = x;
        }
    }
    ImageGrid::new(w, h, k, data)
}

/// Spectral boundary strength: the central-difference gradient magnitude of
/// each nontrivial eigenvector weighted by `1 / sqrt(lambda)`, summed and
/// rescaled to [0, 1].
pub fn spectral_pb(emb: &EigenEmbedding) -> Result<ImageGrid<f64>> {
    if emb.k() < 2 {
        return Err(Error::InvalidArgument("spectral pb needs at least two eigenvectors".into()));
    }
    let (w, h) = emb
        .dims
        .ok_or_else(|| Error::InvalidArgument("embedding has no pixel grid".into()))?;
    let used: Vec<usize> = emb.nontrivial().collect();
    if used.is_empty() {
        return Err(Error::DegenerateGraph("every eigenvalue is zero".into()));
    }
    let mut out = vec![0.0; w * h];
    for &k in &used {
        let v = &emb.vectors[k];
        let weight = 1.0 / emb.eigenvalues[k].sqrt();
        let at = |x: usize, y: usize| v[y * w + x];
        for y in 0..h {
            for x in 0..w {
                let gx = 0.5 * (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y));
                let gy = 0.5 * (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1)));
                out[y * w + x] += weight * gx.hypot(gy);
            }
        }
    }
    let (lo, hi) = out
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    for v in &mut out {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
    ImageGrid::new(w, h, 1, out)
}

/// `(1 - gamma) * pb + gamma * spb`, clamped to [0, 1].
pub fn fuse_spectral<T: Scalar>(pb: &ImageGrid<T>, spb: &ImageGrid<T>, gamma: f64) -> Result<ImageGrid<T>> {
    pb.ensure_same_shape(spb, "fuse_spectral")?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let g = T::lit(gamma);
    let data = pb
        .data()
        .iter()
        .zip(spb.data())
        .map(|(&a, &b)| ((T::one() - g) * a + g * b).max(T::zero()).min(T::one()))
        .collect();
    ImageGrid::new(pb.width(), pb.height(), pb.channels(), data)
}

/// Output of the spectral stage on one boundary map.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    /// Eigenvectors at the input resolution.
    pub embedding: EigenEmbedding,
    pub spb: ImageGrid<f64>,
}

/// Affinity, eigenvectors and spectral boundaries of a boundary map.
pub fn spectral_boundaries<T: Scalar>(pb: &ImageGrid<T>, cfg: &NcutsConfig) -> Result<SpectralResult> {
    cfg.validate()?;
    let pb = pb.cast::<f64>();
    let (w, h) = pb.dims();
    let work = if cfg.downsample { resample(&pb, 0.5)? } else { pb };
    let aff = intervening_contour(&work, cfg.radius, cfg.sigma_ic)?;
    let mut emb = generalized_eigs(&aff, &cfg.eigen_options())?;
    if work.dims() != (w, h) {
        let grid = resize(&embedding_grid(&emb)?, w, h)?;
        let k = emb.k();
        emb.vectors = (0..k).map(|c| grid.channel(c).map(|g| g.into_data())).collect::<Result<_>>()?;
        emb.dims = Some((w, h));
    }
    let spb = spectral_pb(&emb)?;
    Ok(SpectralResult { embedding: emb, spb })
}

/// JSON companion of a stored embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenSidecar {
    pub width: usize,
    pub height: usize,
    pub eigenvalues: Vec<f64>,
    pub trivial: Vec<bool>,
    pub residuals: Vec<f64>,
}

impl EigenSidecar {
    pub fn of(emb: &EigenEmbedding) -> Result<Self> {
        let (width, height) = emb
            .dims
            .ok_or_else(|| Error::InvalidArgument("embedding has no pixel grid".into()))?;
        Ok(Self {
            width,
            height,
            eigenvalues: emb.eigenvalues.clone(),
            trivial: emb.trivial.clone(),
            residuals: emb.residuals.clone(),
        })
    }
}

/// Write `<stem>.bmap` (one channel per eigenvector) and `<stem>.json`.
pub fn write_embedding(emb: &EigenEmbedding, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    crate::imagecore::io::write_bmap(&embedding_grid(emb)?, dir.join(format!("{stem}.bmap")))?;
    let json = serde_json::to_string_pretty(&EigenSidecar::of(emb)?)?;
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

/// Inverse of [`write_embedding`].
pub fn read_embedding(dir: impl AsRef<Path>, stem: &str) -> Result<EigenEmbedding> {
    let dir = dir.as_ref();
    let grid: ImageGrid<f64> = crate::imagecore::io::read_bmap(dir.join(format!("{stem}.bmap")))?;
    let side: EigenSidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let k = side.eigenvalues.len();
    if grid.channels() != k || grid.dims() != (side.width, side.height) || side.trivial.len() != k {
        return Err(Error::Format("embedding sidecar does not match the eigenvector file".into()));
    }
    let vectors = (0..k).map(|c| grid.channel(c).map(|g| g.into_data())).collect::<Result<_>>()?;
    Ok(EigenEmbedding {
        eigenvalues: side.eigenvalues,
        vectors,
        trivial: side.trivial,
        residuals: side.residuals,
        dims: Some((side.width, side.height)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(w: usize, h: usize, lams: &[f64], vecs: Vec<Vec<f64>>) -> EigenEmbedding {
        EigenEmbedding {
            eigenvalues: lams.to_vec(),
            trivial: lams.iter().map(|&l| l.abs() < 1e-9).collect(),
            residuals: vec![0.0; lams.len()],
            vectors: vecs,
            dims: Some((w, h)),
        }
    }

    #[test]
    fn step_edge_support() {
        let (w, h) = (6, 3);
        let step: Vec<f64> = (0..w * h).map(|i| if i % w < 3 { -1.0 } else { 1.0 }).collect();
        let e = emb(w, h, &[0.0, 0.2], vec![vec![1.0; w * h], step]);
        let s = spectral_pb(&e).unwrap();
        for y in 0..h {
            for x in 0..w {
                let on = x == 2 || x == 3;
                assert_eq!(s.get(x, y) > 0.0, on, "({x},{y})");
            }
        }
        assert_eq!(s.min_max(), (0.0, 1.0));
    }

    #[test]
    fn constant_only_is_degenerate() {
        let e = emb(2, 2, &[0.0, 0.0], vec![vec![1.0; 4], vec![0.5; 4]]);
        assert!(matches!(spectral_pb(&e), Err(Error::DegenerateGraph(_))));
    }

    #[test]
    fn fusion_endpoints() {
        let pb = ImageGrid::filled(3, 2, 1, 0.2f64).unwrap();
        let spb = ImageGrid::filled(3, 2, 1, 0.6f64).unwrap();
        assert_eq!(fuse_spectral(&pb, &spb, 0.0).unwrap(), pb);
        assert_eq!(fuse_spectral(&pb, &spb, 1.0).unwrap(), spb);
        let mid = fuse_spectral(&pb, &spb, 0.3).unwrap();
        assert!(mid.data().iter().all(|v| (v - 0.32).abs() < 1e-15));
        assert!(fuse_spectral(&pb, &spb, 1.5).is_err());
    }

    #[test]
    fn embedding_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = emb(3, 2, &[0.0, 0.25], vec![vec![0.1; 6], (0..6).map(|i| i as f64).collect()]);
        write_embedding(&e, dir.path(), "x").unwrap();
        assert_eq!(read_embedding(dir.path(), "x").unwrap(), e);
    }
}
