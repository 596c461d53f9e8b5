//! Inference helpers shared by the command line and the benchmarks.

use rayon::prelude::*;

use crate::bench::{pr_curve, summarize, BenchSummary};
use crate::error::Result;
use crate::imagecore::{build_pyramid, AnnotationSet, ImageGrid};
use crate::bench::nms_thin;
use crate::ncuts::{fuse_spectral, spectral_boundaries, NcutsConfig, SpectralResult};
use crate::net::{forward, NetworkParams};
use crate::train::network_input;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Boundary probabilities of the fused score map at the image's resolution.
pub fn detect(params: &NetworkParams<f64>, image: &ImageGrid<f64>, top_upsample: f64) -> Result<ImageGrid<f64>> {
    let input = network_input(image, params.arch())?;
    let pyramid = build_pyramid(&input, top_upsample, params.arch().scales)?;
    let mut pass = forward(params, &pyramid)?;
    pass.discard_intermediates();
    Ok(pass.into_scores().fused.map(sigmoid))
}

/// Spectral boundaries of a detector map. Eigenvectors are computed on the
/// non-maximum-suppressed map: on the raw map the plateau around each ridge
/// is cut by its own intervening contours, which leaves a double response.
pub fn spectral_of_pb(pb: &ImageGrid<f64>, cfg: &NcutsConfig) -> Result<SpectralResult> {
    spectral_boundaries(&nms_thin(pb), cfg)
}

/// `detect` followed by spectral fusion with weight `cfg.gamma`.
pub fn detect_spectral(
    params: &NetworkParams<f64>,
    image: &ImageGrid<f64>,
    top_upsample: f64,
    cfg: &NcutsConfig,
) -> Result<ImageGrid<f64>> {
    let pb = detect(params, image, top_upsample)?;
    let s = spectral_of_pb(&pb, cfg)?;
    fuse_spectral(&pb, &s.spb, cfg.gamma)
}

/// Benchmark boundary maps against their annotations.
pub fn benchmark(
    maps: &[ImageGrid<f64>],
    anns: &[AnnotationSet],
    thresholds: &[f64],
    tol_frac: f64,
) -> Result<BenchSummary> {
    if maps.len() != anns.len() {
        return Err(crate::Error::DimensionMismatch(format!(
            "{} maps for {} annotation sets",
            maps.len(),
            anns.len()
        )));
    }
    let curves = maps
        .par_iter()
        .zip(anns)
        .map(|(m, a)| pr_curve(m, a, thresholds, tol_frac))
        .collect::<Result<Vec<_>>>()?;
    summarize(&curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Architecture};

    #[test]
    fn detect_gives_probabilities_at_input_size() {
        let arch = Architecture::default();
        let p = init_params::<f64>(&arch, 3).unwrap();
        let img = ImageGrid::from_fn(13, 9, |x, y| ((x * y) % 5) as f64 / 5.0).unwrap();
        let pb = detect(&p, &img, 1.0).unwrap();
        assert_eq!(pb.dims(), (13, 9));
        assert!(pb.data().iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.3) + sigmoid(-0.3) - 1.0).abs() < 1e-15);
    }
}
