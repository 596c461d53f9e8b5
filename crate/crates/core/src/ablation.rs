//! Component ablation on the synthetic shapes dataset: a plain deeply
//! supervised single-scale detector, then bag-max supervision, annealed side
//! losses, a three-level pyramid and finally spectral fusion.
//!
//! Every row is trained once per seed on the same split, and its scores pool
//! the test curves of all seeds: single runs differ by about 0.01 ODS, which
//! is larger than some of the effects being compared.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{default_thresholds, BenchSummary};
use crate::error::{Error, Result};
use crate::imagecore::{AnnotationSet, ImageGrid};
use crate::ncuts::{fuse_spectral, NcutsConfig};
use crate::net::{Architecture, NetworkParams};
use crate::pipeline::{benchmark, detect, spectral_of_pb};
use crate::synthetic::{generate, SyntheticConfig, SyntheticSample};
use crate::train::{prepare_sample, train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub synthetic: SyntheticConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Architecture of the multi-scale runs; single-scale runs use one level.
    pub arch: Architecture,
    /// Training settings of the full model; earlier rows switch parts off.
    pub train: TrainConfig,
    pub ncuts: NcutsConfig,
    /// Candidate fusion weights, picked by validation ODS.
    pub gammas: Vec<f64>,
    pub tol_frac: f64,
    /// Training seeds; each row is fitted once per seed.
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            n_train: 200,
            n_val: 25,
            n_test: 50,
            arch: Architecture::default(),
            train: TrainConfig {
                epochs: 40,
                ..TrainConfig::default()
            },
            ncuts: NcutsConfig {
                sigma_ic: 0.3,
                ..NcutsConfig::default()
            },
            gammas: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            tol_frac: 0.02,
            seeds: vec![0, 1, 2],
        }
    }
}

/// One ablation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub summary: BenchSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    /// Fusion weight chosen on the validation images.
    pub gamma: f64,
    pub val_ods: Vec<(f64, f64)>,
}

impl AblationResult {
    pub fn ods(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.summary.ods_f)
    }

    pub fn named(&self) -> Vec<(String, BenchSummary)> {
        self.rows.iter().map(|r| (r.name.clone(), r.summary.clone())).collect()
    }
}

pub const BASELINE: &str = "DSN";
pub const WITH_MIL: &str = "DSN+MIL";
pub const WITH_GDSN: &str = "G-DSN+MIL";
pub const MULTI_SCALE: &str = "G-DSN+MIL, 3 scales";
pub const WITH_SPECTRAL: &str = "G-DSN+MIL, 3 scales, spectral";

/// Training, validation and test samples are consecutive dataset indices.
fn samples(cfg: &AblationConfig, start: usize, n: usize) -> Result<Vec<SyntheticSample>> {
    (start..start + n)
        .into_par_iter()
        .map(|i| generate(&cfg.synthetic, i as u64))
        .collect()
}

fn fit(train_set: &[SyntheticSample], arch: &Architecture, tc: &TrainConfig, seed: u64) -> Result<NetworkParams<f64>> {
    let data = train_set
        .par_iter()
        .map(|s| prepare_sample(&s.image, &s.annotations, arch, tc))
        .collect::<Result<Vec<_>>>()?;
    Ok(train(&data, arch, tc, seed, |_, _, _| Ok(()))?.0)
}

fn detect_all(params: &NetworkParams<f64>, set: &[SyntheticSample], top: f64) -> Result<Vec<ImageGrid<f64>>> {
    set.par_iter().map(|s| detect(params, &s.image, top)).collect()
}

/// Annotations repeated once per seed, matching maps concatenated by seed.
fn anns(set: &[SyntheticSample], seeds: usize) -> Vec<AnnotationSet> {
    (0..seeds).flat_map(|_| set.iter().map(|s| s.annotations.clone())).collect()
}

/// Run every row. `log` receives progress lines.
pub fn run_ablation(cfg: &AblationConfig, mut log: impl FnMut(&str)) -> Result<AblationResult> {
    if cfg.n_train == 0 || cfg.n_val == 0 || cfg.n_test == 0 || cfg.gammas.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs train, validation and test images, a gamma grid and a seed".into(),
        ));
    }
    let train_set = samples(cfg, 0, cfg.n_train)?;
    let val_set = samples(cfg, cfg.n_train, cfg.n_val)?;
    let test_set = samples(cfg, cfg.n_train + cfg.n_val, cfg.n_test)?;
    let n_seeds = cfg.seeds.len();
    let test_anns = anns(&test_set, n_seeds);
    let thr = default_thresholds();
    let top = cfg.train.top_upsample;

    let single = Architecture {
        scales: 1,
        ..cfg.arch.clone()
    };
    let variants = [
        (BASELINE, &single, false, false),
        (WITH_MIL, &single, true, false),
        (WITH_GDSN, &single, true, true),
        (MULTI_SCALE, &cfg.arch, true, true),
    ];
    let mut rows = Vec::new();
    let mut full = Vec::new();
    for (name, arch, mil, graduated) in variants {
        let tc = TrainConfig {
            mil,
            graduated,
            ..cfg.train.clone()
        };
        let mut maps = Vec::new();
        full.clear();
        for &seed in &cfg.seeds {
            let params = fit(&train_set, arch, &tc, seed)?;
            maps.extend(detect_all(&params, &test_set, top)?);
            full.push(params);
        }
        let summary = benchmark(&maps, &test_anns, &thr, cfg.tol_frac)?;
        log(&format!("{name}: ODS {:.4} OIS {:.4} AP {:.4}", summary.ods_f, summary.ois_f, summary.ap));
        rows.push(AblationRow {
            name: name.into(),
            summary,
        });
    }

    // spectral maps are computed once per image and reused for every gamma
    let spectral = |set: &[SyntheticSample]| -> Result<Vec<(ImageGrid<f64>, ImageGrid<f64>)>> {
        let mut pairs = Vec::new();
        for params in &full {
            let maps = detect_all(params, set, top)?;
            pairs.extend(
                maps.into_par_iter()
                    .map(|pb| {
                        let spb = spectral_of_pb(&pb, &cfg.ncuts)?.spb;
                        Ok((pb, spb))
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(pairs)
    };
    let val_pairs = spectral(&val_set)?;
    let val_anns = anns(&val_set, n_seeds);
    let mut val_ods = Vec::new();
    for &g in &cfg.gammas {
        let fused = val_pairs
            .iter()
            .map(|(pb, spb)| fuse_spectral(pb, spb, g))
            .collect::<Result<Vec<_>>>()?;
        let s = benchmark(&fused, &val_anns, &thr, cfg.tol_frac)?;
        log(&format!("validation gamma {g}: ODS {:.4}", s.ods_f));
        val_ods.push((g, s.ods_f));
    }
    // first candidate wins ties
    let gamma = val_ods
        .iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, &(g, f)| if f > best.1 { (g, f) } else { best })
        .0;
    let test_pairs = spectral(&test_set)?;
    let fused = test_pairs
        .iter()
        .map(|(pb, spb)| fuse_spectral(pb, spb, gamma))
        .collect::<Result<Vec<_>>>()?;
    let summary = benchmark(&fused, &test_anns, &thr, cfg.tol_frac)?;
    log(&format!("{WITH_SPECTRAL} (gamma {gamma}): ODS {:.4} OIS {:.4} AP {:.4}", summary.ods_f, summary.ois_f, summary.ap));
    rows.push(AblationRow {
        name: WITH_SPECTRAL.into(),
        summary,
    });
    Ok(AblationResult { rows, gamma, val_ods })
}
