//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 0
//!
//! [architecture]      # input_channels, stage_channels, kernel_size, pool_after, scales
//! [train]             # epochs, lr, momentum, batch_size, mil, graduated, bag_radius,
//!                     # consensus, beta, side_weights, reduction, top_upsample
//! [ncuts]             # k, radius, sigma_ic, gamma, downsample, tol, max_iter, seed
//! [crf]               # iters, pixel_cap, augment, [crf.pairwise] w1 w2 sigma_alpha ...
//! [bench]             # tol_frac, thresholds
//! [synthetic]         # width, height, annotators, shapes, jitter, omit, texture, noise
//! [gradcheck]         # width, height, top_upsample, eps, tol, abs_floor, corrupt, ...
//! [paths]             # data, out
//! ```
//!
//! Every section and key is optional; unknown keys are rejected. Command-line
//! flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use boundkit::bench::{default_thresholds, DEFAULT_TOL_FRAC};
use boundkit::crf::CrfConfig;
use boundkit::gradcheck::GradCheckConfig;
use boundkit::ncuts::NcutsConfig;
use boundkit::net::Architecture;
use boundkit::synthetic::SyntheticConfig;
use boundkit::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Match radius as a fraction of the image diagonal.
    pub tol_frac: f64,
    pub thresholds: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            tol_frac: DEFAULT_TOL_FRAC,
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub ncuts: NcutsConfig,
    pub crf: CrfConfig,
    pub bench: BenchConfig,
    pub synthetic: SyntheticConfig,
    pub gradcheck: GradCheckConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> boundkit::Result<()> {
        self.train.validate(&self.architecture)?;
        self.ncuts.validate()?;
        self.crf.pairwise.validate()?;
        self.synthetic.validate()?;
        self.gradcheck.arch.validate()?;
        if !(self.bench.tol_frac > 0.0) {
            return Err(boundkit::Error::InvalidArgument("bench.tol_frac must be positive".into()));
        }
        if self.bench.thresholds.is_empty() {
            return Err(boundkit::Error::InvalidArgument("bench.thresholds is empty".into()));
        }
        Ok(())
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
