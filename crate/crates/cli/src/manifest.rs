//! Sidecar manifest written next to every command's outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};

#[derive(Debug, Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a RunConfig,
    outputs: Vec<OutputEntry>,
}

/// Write `<out>/<command>.manifest.json` listing `outputs` (relative to `out`)
/// with their digests.
pub fn write_manifest(out: &Path, command: &str, cfg: &RunConfig, outputs: &[PathBuf]) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(outputs.len());
    for p in outputs {
        let bytes = std::fs::read(p).with_context(|| format!("hashing {}", p.display()))?;
        let rel = p.strip_prefix(out).unwrap_or(p);
        entries.push(OutputEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: hex(&Sha256::digest(&bytes)),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let m = Manifest {
        tool: "boundkit",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        config: cfg,
        outputs: entries,
    };
    let path = out.join(format!("{command}.manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(path)
}
