mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Boundary detection: training, detection, spectral grouping, CRF and benchmarking.
#[derive(Debug, Parser)]
#[command(name = "boundkit", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `paths.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a detector on a dataset directory.
    Train {
        /// Dataset root with images/ and groundtruth/.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Boundary maps of one or more images.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "image", required = true)]
        images: Vec<PathBuf>,
        /// Pyramid levels; must match the checkpoint.
        #[arg(long)]
        scales: Option<usize>,
        #[arg(long)]
        top_upsample: Option<f64>,
        /// Fuse with spectral boundaries.
        #[arg(long)]
        spectral: bool,
        /// Spectral fusion weight (implies --spectral).
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Normalized-cuts eigenvectors and spectral boundaries of a boundary map.
    Spectral {
        #[arg(long)]
        pb: PathBuf,
    },
    /// Dense CRF over boundary / non-boundary labels.
    Crf {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        pb: PathBuf,
        /// Add eigenvector channels to the appearance features.
        #[arg(long)]
        augment: bool,
        /// Stored embedding (`DIR/STEM`, as written by `spectral`); computed from --pb when absent.
        #[arg(long)]
        embedding: Option<PathBuf>,
    },
    /// Benchmark a directory of boundary maps.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth root (`<stem>/<annotator>.png`) or a dataset root.
        #[arg(long)]
        gt: PathBuf,
        /// Row name in the summary.
        #[arg(long, default_value = "pred")]
        name: String,
        #[arg(long)]
        tol_frac: Option<f64>,
    },
    /// Finite-difference check of every hand-written gradient.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Negative control: scale one analytic gradient tensor by 1 + F.
        #[arg(long)]
        corrupt: Option<f64>,
    },
    /// Write the seeded synthetic shapes dataset.
    GenSynthetic {
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        start: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
