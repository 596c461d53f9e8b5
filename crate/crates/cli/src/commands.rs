use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use boundkit::bench::{nms_thin, pr_curve, pr_svg, summarize, write_curve_csv, write_summary_csv};
use boundkit::crf::{augment_features, meanfield_infer, rgb_features, UnaryField};
use boundkit::dataset::{load_annotations, load_dataset, write_item, DONTCARE_FILE};
use boundkit::gradcheck::{check_losses, check_network, GroupReport};
use boundkit::imagecore::io::{read_map, read_png, write_bmap, write_mask_png, write_png16};
use boundkit::imagecore::{ImageGrid, Mask};
use boundkit::losses::write_loss_csv;
use boundkit::ncuts::{fuse_spectral, read_embedding, write_embedding};
use boundkit::net::{read_checkpoint, write_checkpoint, NetworkParams};
use boundkit::pipeline::{detect, spectral_of_pb};
use boundkit::synthetic::generate;
use boundkit::train::{prepare_sample, train, TrainingSample};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::write_manifest;
use crate::{Cli, Command};

/// A numerical check that ran to completion and failed.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

/// 2 for numerical failures, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<NumericalFailure>().is_some() {
        return 2;
    }
    for cause in e.chain() {
        if let Some(b) = cause.downcast_ref::<boundkit::Error>() {
            return match b {
                boundkit::Error::NoConvergence { .. }
                | boundkit::Error::NonFiniteGradient { .. }
                | boundkit::Error::DegenerateGraph(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn stem_of(p: &Path) -> Result<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("{}: no file name", p.display()))
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.common.out {
        cfg.paths.out = Some(o);
    }
    match &cli.command {
        Command::Train { data, epochs, lr } => {
            if let Some(d) = data {
                cfg.paths.data = Some(d.clone());
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(l) = lr {
                cfg.train.lr = *l;
            }
        }
        Command::Detect { scales, top_upsample, spectral, gamma, .. } => {
            if let Some(s) = scales {
                cfg.architecture.scales = *s;
            }
            if let Some(t) = top_upsample {
                cfg.train.top_upsample = *t;
            }
            if let Some(g) = gamma {
                cfg.ncuts.gamma = *g;
            } else if !spectral {
                cfg.ncuts.gamma = 0.0;
            }
        }
        Command::Crf { augment, .. } => cfg.crf.augment |= *augment,
        Command::Eval { tol_frac: Some(t), .. } => cfg.bench.tol_frac = *t,
        Command::Gradcheck { corrupt, .. } => {
            if corrupt.is_some() {
                cfg.gradcheck.corrupt = *corrupt;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    let out = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    mkdir(&out)?;
    let (name, outputs) = match cli.command {
        Command::Train { .. } => ("train", cmd_train(&cfg, &out)?),
        Command::Detect {
            checkpoint,
            images,
            spectral,
            gamma,
            ..
        } => ("detect", cmd_detect(&cfg, &out, &checkpoint, &images, spectral || gamma.is_some())?),
        Command::Spectral { pb } => ("spectral", cmd_spectral(&cfg, &out, &pb)?),
        Command::Crf { image, pb, embedding, .. } => ("crf", cmd_crf(&cfg, &out, &image, &pb, embedding.as_deref())?),
        Command::Eval { pred, gt, name, .. } => ("eval", cmd_eval(&cfg, &out, &pred, &gt, &name)?),
        Command::Gradcheck { seeds, .. } => ("gradcheck", cmd_gradcheck(&cfg, &out, seeds)?),
        Command::GenSynthetic { count, start } => ("gen-synthetic", cmd_gen_synthetic(&cfg, &out, start, count)?),
    };
    let outputs = match outputs {
        Ok(o) => o,
        Err((o, failure)) => {
            write_manifest(&out, name, &cfg, &o)?;
            return Err(failure.into());
        }
    };
    write_manifest(&out, name, &cfg, &outputs)?;
    Ok(())
}

/// Written files, or written files plus a numerical failure to report.
type Outcome = std::result::Result<Vec<PathBuf>, (Vec<PathBuf>, NumericalFailure)>;

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let data_dir = cfg.paths.data.as_ref().context("train needs --data or paths.data")?;
    let items = load_dataset(data_dir)?;
    let samples = items
        .par_iter()
        .map(|it| {
            prepare_sample(&it.image, &it.annotations, &cfg.architecture, &cfg.train)
                .with_context(|| format!("preparing {}", it.stem))
        })
        .collect::<Result<Vec<TrainingSample>>>()?;
    let ckdir = out.join("checkpoints");
    mkdir(&ckdir)?;
    let mut outputs = Vec::new();
    let (params, records) = train(&samples, &cfg.architecture, &cfg.train, cfg.seed, |epoch, p, rec| {
        let path = ckdir.join(format!("epoch_{:03}.bnet", epoch + 1));
        write_checkpoint(p, &path)?;
        eprintln!(
            "epoch {:>3}: side {:.5} fuse {:.5} total {:.5}",
            epoch + 1,
            rec.side_loss,
            rec.fuse_loss,
            rec.total
        );
        outputs.push(path);
        Ok(())
    })?;
    if !params.is_finite() {
        return Ok(Err((outputs, NumericalFailure("training diverged to non-finite parameters".into()))));
    }
    let model = out.join("model.bnet");
    write_checkpoint(&params, &model)?;
    let csv = out.join("loss.csv");
    let mut buf = Vec::new();
    write_loss_csv(&records, &mut buf)?;
    std::fs::write(&csv, buf)?;
    outputs.extend([model, csv]);
    Ok(Ok(outputs))
}

fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<NetworkParams<f64>> {
    let params: NetworkParams<f64> = read_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
    if params.arch() != &cfg.architecture {
        return Err(boundkit::Error::DimensionMismatch(format!(
            "{} holds architecture {:?}, configuration expects {:?}",
            path.display(),
            params.arch(),
            cfg.architecture
        ))
        .into());
    }
    Ok(params)
}

fn cmd_detect(cfg: &RunConfig, out: &Path, checkpoint: &Path, images: &[PathBuf], spectral: bool) -> Result<Outcome> {
    let params = load_checkpoint(cfg, checkpoint)?;
    let mut dirs = vec!["pb", "fused", "thin"];
    if spectral {
        dirs.push("spb");
    }
    for d in &dirs {
        mkdir(&out.join(d))?;
    }
    let mut outputs = Vec::new();
    let mut stems = BTreeSet::new();
    for img_path in images {
        let stem = stem_of(img_path)?;
        if !stems.insert(stem.clone()) {
            bail!("two input images share the stem {stem}");
        }
        let img: ImageGrid<f64> = read_png(img_path).with_context(|| format!("reading {}", img_path.display()))?;
        let pb = detect(&params, &img, cfg.train.top_upsample)?;
        let mut maps = vec![("pb", pb.clone())];
        let fused = if spectral {
            let s = spectral_of_pb(&pb, &cfg.ncuts)?;
            let f = fuse_spectral(&pb, &s.spb, cfg.ncuts.gamma)?;
            maps.push(("spb", s.spb));
            f
        } else {
            pb
        };
        maps.push(("thin", nms_thin(&fused)));
        maps.push(("fused", fused));
        for (dir, map) in maps {
            let bmap = out.join(dir).join(format!("{stem}.bmap"));
            let png = out.join(dir).join(format!("{stem}.png"));
            write_bmap(&map, &bmap)?;
            write_png16(&map, &png)?;
            outputs.extend([bmap, png]);
        }
    }
    Ok(Ok(outputs))
}

fn read_pb(path: &Path) -> Result<ImageGrid<f64>> {
    let m: ImageGrid<f64> = read_map(path).with_context(|| format!("reading {}", path.display()))?;
    if m.channels() != 1 {
        bail!("{}: boundary map must have one channel", path.display());
    }
    Ok(m)
}

fn cmd_spectral(cfg: &RunConfig, out: &Path, pb_path: &Path) -> Result<Outcome> {
    let stem = stem_of(pb_path)?;
    let pb = read_pb(pb_path)?;
    let s = spectral_of_pb(&pb, &cfg.ncuts)?;
    let emb_stem = format!("{stem}_embedding");
    write_embedding(&s.embedding, out, &emb_stem)?;
    let spb = out.join(format!("{stem}_spb.bmap"));
    write_bmap(&s.spb, &spb)?;
    let fused = out.join(format!("{stem}_fused.bmap"));
    write_bmap(&fuse_spectral(&pb, &s.spb, cfg.ncuts.gamma)?, &fused)?;
    Ok(Ok(vec![
        out.join(format!("{emb_stem}.bmap")),
        out.join(format!("{emb_stem}.json")),
        spb,
        fused,
    ]))
}

fn cmd_crf(cfg: &RunConfig, out: &Path, image: &Path, pb_path: &Path, embedding: Option<&Path>) -> Result<Outcome> {
    let stem = stem_of(pb_path)?;
    let img: ImageGrid<f64> = read_png(image).with_context(|| format!("reading {}", image.display()))?;
    let pb = read_pb(pb_path)?;
    let feat = if cfg.crf.augment {
        let emb = match embedding {
            Some(e) => {
                let dir = e.parent().unwrap_or(Path::new("."));
                read_embedding(dir, &stem_of(e)?).with_context(|| format!("reading embedding {}", e.display()))?
            }
            None => spectral_of_pb(&pb, &cfg.ncuts)?.embedding,
        };
        augment_features(&img, &emb)?
    } else {
        rgb_features(&img)?
    };
    let q = meanfield_infer(
        &UnaryField::from_binary(&pb)?,
        &feat,
        &cfg.crf.pairwise,
        cfg.crf.iters,
        cfg.crf.pixel_cap,
    )?;
    let (w, h) = q.dims();
    let labels = q.argmax();
    let prob = q.grid().channel(1)?;
    let qpath = out.join(format!("{stem}_crf.bmap"));
    let lpath = out.join(format!("{stem}_crf_labels.png"));
    write_bmap(&prob, &qpath)?;
    write_mask_png(&Mask::new(w, h, labels.iter().map(|&l| l == 1).collect())?, &lpath)?;
    Ok(Ok(vec![qpath, lpath]))
}

fn map_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        if matches!(p.extension().and_then(|x| x.to_str()), Some("png" | "bmap")) {
            files.push((stem_of(&p)?, p));
        }
    }
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        bail!("{}: both a PNG and a BMAP for stem {}", dir.display(), w[0].0);
    }
    Ok(files)
}

fn gt_stems(gt: &Path) -> Result<BTreeSet<String>> {
    let mut s = BTreeSet::new();
    for e in std::fs::read_dir(gt).with_context(|| format!("reading {}", gt.display()))? {
        let p = e?.path();
        if p.is_dir() {
            s.insert(stem_of(&p)?);
        }
    }
    Ok(s)
}

fn cmd_eval(cfg: &RunConfig, out: &Path, pred: &Path, gt: &Path, name: &str) -> Result<Outcome> {
    let gt = if gt.join("groundtruth").is_dir() {
        gt.join("groundtruth")
    } else {
        gt.to_path_buf()
    };
    let preds = map_files(pred)?;
    if preds.is_empty() {
        bail!("{}: no boundary maps (*.png, *.bmap)", pred.display());
    }
    let pred_stems: BTreeSet<String> = preds.iter().map(|p| p.0.clone()).collect();
    let gts = gt_stems(&gt)?;
    let no_gt: Vec<&String> = pred_stems.difference(&gts).collect();
    let no_pred: Vec<&String> = gts.difference(&pred_stems).collect();
    if !no_gt.is_empty() || !no_pred.is_empty() {
        bail!(
            "unmatched stems; without ground truth: {no_gt:?}; without prediction: {no_pred:?}"
        );
    }
    let curves = preds
        .par_iter()
        .map(|(stem, path)| {
            let map = read_pb(path)?;
            let ann = load_annotations(&gt, stem)?;
            Ok(pr_curve(&map, &ann, &cfg.bench.thresholds, cfg.bench.tol_frac)
                .with_context(|| format!("evaluating {stem}"))?)
        })
        .collect::<Result<Vec<_>>>()?;
    let cdir = out.join("curves");
    mkdir(&cdir)?;
    let mut outputs = Vec::new();
    for ((stem, _), c) in preds.iter().zip(&curves) {
        let p = cdir.join(format!("{stem}.csv"));
        let mut buf = Vec::new();
        write_curve_csv(c, &mut buf)?;
        std::fs::write(&p, buf)?;
        outputs.push(p);
    }
    let summary = summarize(&curves)?;
    let runs = vec![(name.to_string(), summary)];
    let dataset = out.join("dataset.csv");
    let mut buf = Vec::new();
    write_curve_csv(&runs[0].1.dataset, &mut buf)?;
    std::fs::write(&dataset, buf)?;
    let csv = out.join("summary.csv");
    let mut buf = Vec::new();
    write_summary_csv(&runs, &mut buf)?;
    std::fs::write(&csv, &buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    let svg = out.join("pr.svg");
    std::fs::write(&svg, pr_svg(&runs))?;
    outputs.extend([dataset, csv, svg]);
    Ok(Ok(outputs))
}

#[derive(Serialize)]
struct GradcheckOutput {
    network: Vec<boundkit::gradcheck::GradCheckReport>,
    losses: Vec<(u64, Vec<GroupReport>)>,
    tolerance: f64,
    passed: bool,
}

fn cmd_gradcheck(cfg: &RunConfig, out: &Path, seeds: u64) -> Result<Outcome> {
    let gc = &cfg.gradcheck;
    let t = gc.total_epochs;
    let epochs = [0, t / 2, t];
    let mut network = Vec::new();
    let mut losses = Vec::new();
    for s in cfg.seed..cfg.seed + seeds {
        for &e in &epochs {
            network.push(check_network(gc, s, e)?);
        }
        losses.push((s, check_losses(gc, s)?));
    }
    let loss_ok = losses
        .iter()
        .all(|(_, gs)| gs.iter().all(|g| g.max_rel_err < gc.tol));
    let passed = loss_ok && network.iter().all(|r| r.passed);

    // max relative error per parameter group across all runs
    let mut groups: Vec<(String, f64, usize)> = Vec::new();
    for g in network.iter().flat_map(|r| &r.groups).chain(losses.iter().flat_map(|l| &l.1)) {
        match groups.iter_mut().find(|x| x.0 == g.group) {
            Some(x) => {
                x.1 = x.1.max(g.max_rel_err);
                x.2 += g.checked;
            }
            None => groups.push((g.group.clone(), g.max_rel_err, g.checked)),
        }
    }
    println!("{:<14} {:>9} {:>12}", "group", "checked", "max_rel_err");
    for (g, e, n) in &groups {
        println!("{g:<14} {n:>9} {e:>12.3e}");
    }
    println!("{} (tolerance {:.0e})", if passed { "PASS" } else { "FAIL" }, gc.tol);
    let report = GradcheckOutput {
        network,
        losses,
        tolerance: gc.tol,
        passed,
    };
    let path = out.join("gradcheck.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    if passed {
        Ok(Ok(vec![path]))
    } else {
        Ok(Err((vec![path], NumericalFailure("gradient check failed".into()))))
    }
}

fn cmd_gen_synthetic(cfg: &RunConfig, out: &Path, start: u64, count: u64) -> Result<Outcome> {
    let samples = (start..start + count)
        .into_par_iter()
        .map(|i| Ok((i, generate(&cfg.synthetic, i)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = Vec::new();
    for (i, s) in samples {
        let stem = format!("syn_{i:05}");
        write_item(out, &stem, &s.image, &s.annotations)?;
        outputs.push(out.join("images").join(format!("{stem}.png")));
        let gt = out.join("groundtruth").join(&stem);
        for k in 0..s.annotations.annotators().len() {
            outputs.push(gt.join(format!("{k}.png")));
        }
        if s.annotations.dontcare().is_some() {
            outputs.push(gt.join(DONTCARE_FILE));
        }
    }
    Ok(Ok(outputs))
}
