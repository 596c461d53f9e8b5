//! Minibatch SGD training of the detector under the combined side + fusion
//! objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bags::{build_bags, consensus_positives, BagSet, DEFAULT_BAG_RADIUS};
use crate::error::{Error, Result};
use crate::imagecore::{build_pyramid, AnnotationSet, ImageGrid, Pyramid};
use crate::losses::{total_loss, LossConfig, LossRecord, Reduction, TrainSchedule};
use crate::net::{backward, forward, init_params, Architecture, NetworkParams, Sgd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Bag-max loss instead of per-pixel cross-entropy.
    pub mil: bool,
    /// Anneal the side losses with `1 - t/T`; otherwise they keep weight 1.
    pub graduated: bool,
    pub bag_radius: f64,
    /// Annotators that must mark a pixel for it to count as positive.
    pub consensus: usize,
    /// Fixed positive weight; per-image class ratio when absent.
    pub beta: Option<f64>,
    /// Side-loss weights; all 1 when absent.
    pub side_weights: Option<Vec<f64>>,
    pub reduction: Reduction,
    /// Scale of the finest pyramid level.
    pub top_upsample: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 4,
            mil: true,
            graduated: true,
            bag_radius: DEFAULT_BAG_RADIUS,
            consensus: 1,
            beta: None,
            side_weights: None,
            reduction: Reduction::Mean,
            top_upsample: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        arch.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be at least 1".into()));
        }
        if !(self.top_upsample > 0.0) {
            return Err(Error::InvalidArgument("top_upsample must be positive".into()));
        }
        if self.consensus == 0 {
            return Err(Error::InvalidArgument("consensus must be at least 1".into()));
        }
        if !(self.bag_radius >= 0.0) {
            return Err(Error::InvalidArgument("bag radius must be >= 0".into()));
        }
        self.loss_config(arch).validate()?;
        Sgd::new(self.lr, self.momentum)?;
        Ok(())
    }

    pub fn loss_config(&self, arch: &Architecture) -> LossConfig<f64> {
        LossConfig {
            beta: self.beta,
            side_weights: self.side_weights.clone().unwrap_or_else(|| vec![1.0; arch.stages()]),
            mil: self.mil,
            reduction: self.reduction,
        }
    }

    pub fn schedule(&self, epoch: usize) -> TrainSchedule {
        TrainSchedule {
            epoch: if self.graduated { epoch } else { 0 },
            total_epochs: self.epochs,
            lr: self.lr,
            momentum: self.momentum,
            batch_size: self.batch_size,
        }
    }
}

/// Network input with the channel count the architecture expects.
pub fn network_input(image: &ImageGrid<f64>, arch: &Architecture) -> Result<ImageGrid<f64>> {
    match (arch.input_channels, image.channels()) {
        (a, b) if a == b => Ok(image.clone()),
        (1, _) => image.to_luma(),
        (3, 1) => image.to_rgb(),
        (a, b) => Err(Error::DimensionMismatch(format!(
            "network expects {a} input channels, image has {b}"
        ))),
    }
}

/// One training image ready for the network.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub pyramid: Pyramid<f64>,
    pub bags: BagSet,
}

/// Pyramid and supervision of one annotated image. Without MIL every
/// consensus pixel is its own singleton bag.
pub fn prepare_sample(
    image: &ImageGrid<f64>,
    ann: &AnnotationSet,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<TrainingSample> {
    if image.dims() != ann.dims() {
        return Err(Error::DimensionMismatch("image and annotations differ in size".into()));
    }
    let input = network_input(image, arch)?;
    let pyramid = build_pyramid(&input, cfg.top_upsample, arch.scales)?;
    let positives = consensus_positives(ann, cfg.consensus.min(ann.annotators().len()))?;
    let radius = if cfg.mil { cfg.bag_radius } else { 0.0 };
    let bags = build_bags(&positives, radius, ann.dontcare())?;
    Ok(TrainingSample { pyramid, bags })
}

struct SampleResult {
    grads: Vec<f64>,
    side: f64,
    fuse: f64,
    total: f64,
    weight: f64,
}

fn sample_gradient(
    params: &NetworkParams<f64>,
    s: &TrainingSample,
    loss: &LossConfig<f64>,
    sched: &TrainSchedule,
) -> Result<SampleResult> {
    let pass = forward(params, &s.pyramid)?;
    let tl = total_loss(&pass.scores, &s.bags, loss, sched)?;
    let g = backward(params, &pass, &tl.grads)?;
    Ok(SampleResult {
        grads: g.to_flat(),
        side: tl.side,
        fuse: tl.fuse,
        total: tl.total,
        weight: tl.gdsn_weight,
    })
}

/// Mean loss of `params` over `data` at `epoch`, without updating anything.
pub fn evaluate_loss(
    params: &NetworkParams<f64>,
    data: &[TrainingSample],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<LossRecord> {
    let loss = cfg.loss_config(params.arch());
    let sched = cfg.schedule(epoch);
    let parts: Vec<(f64, f64, f64, f64)> = data
        .par_iter()
        .map(|s| {
            let pass = forward(params, &s.pyramid)?;
            let tl = total_loss(&pass.scores, &s.bags, &loss, &sched)?;
            Ok((tl.side, tl.fuse, tl.total, tl.gdsn_weight))
        })
        .collect::<Result<_>>()?;
    let n = parts.len().max(1) as f64;
    Ok(LossRecord {
        epoch,
        side_loss: parts.iter().map(|p| p.0).sum::<f64>() / n,
        fuse_loss: parts.iter().map(|p| p.1).sum::<f64>() / n,
        gdsn_weight: parts.first().map_or(1.0, |p| p.3),
        total: parts.iter().map(|p| p.2).sum::<f64>() / n,
    })
}

/// Train from `init_params(arch, seed)`. Sample order is reshuffled every
/// epoch from the same seed; per-sample gradients may be computed in parallel
/// but are summed in batch order, so results do not depend on thread count.
///
/// `on_epoch` sees the parameters after each epoch and that epoch's mean
/// training loss.
pub fn train(
    data: &[TrainingSample],
    arch: &Architecture,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &NetworkParams<f64>, &LossRecord) -> Result<()>,
) -> Result<(NetworkParams<f64>, Vec<LossRecord>)> {
    cfg.validate(arch)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let mut params = init_params::<f64>(arch, seed)?;
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum)?;
    let loss = cfg.loss_config(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let sched = cfg.schedule(epoch);
        order.shuffle(&mut rng);
        let (mut side, mut fuse, mut total, mut weight) = (0.0, 0.0, 0.0, 1.0);
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<SampleResult> = batch
                .par_iter()
                .map(|&i| sample_gradient(&params, &data[i], &loss, &sched))
                .collect::<Result<_>>()?;
            let mut acc = vec![0.0; params.param_count()];
            for r in &results {
                for (a, g) in acc.iter_mut().zip(&r.grads) {
                    *a += g;
                }
                side += r.side;
                fuse += r.fuse;
                total += r.total;
                weight = r.weight;
            }
            let scale = 1.0 / results.len() as f64;
            acc.iter_mut().for_each(|a| *a *= scale);
            let mut grads = params.zeros_like();
            grads.set_flat(&acc)?;
            sgd.step(&mut params, &grads)?;
        }
        let n = data.len() as f64;
        let rec = LossRecord {
            epoch,
            side_loss: side / n,
            fuse_loss: fuse / n,
            gdsn_weight: weight,
            total: total / n,
        };
        on_epoch(epoch, &params, &rec)?;
        records.push(rec);
    }
    Ok((params, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};

    fn tiny() -> (Architecture, TrainConfig, Vec<TrainingSample>) {
        let arch = Architecture {
            stage_channels: vec![4, 4],
            pool_after: vec![true, false],
            scales: 2,
            ..Architecture::default()
        };
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let syn = SyntheticConfig {
            width: 16,
            height: 16,
            ..SyntheticConfig::default()
        };
        let data = (0..4)
            .map(|i| {
                let s = generate(&syn, i).unwrap();
                prepare_sample(&s.image, &s.annotations, &arch, &cfg).unwrap()
            })
            .collect();
        (arch, cfg, data)
    }

    #[test]
    fn training_is_deterministic() {
        let (arch, cfg, data) = tiny();
        let (a, ra) = train(&data, &arch, &cfg, 9, |_, _, _| Ok(())).unwrap();
        let (b, rb) = train(&data, &arch, &cfg, 9, |_, _, _| Ok(())).unwrap();
        let bits = |p: &NetworkParams<f64>| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(ra, rb);
        assert_eq!(ra.len(), 3);
        assert_eq!(ra[0].gdsn_weight, 1.0);
    }

    #[test]
    fn dsn_keeps_unit_side_weight() {
        let (arch, mut cfg, data) = tiny();
        cfg.graduated = false;
        let (_, r) = train(&data, &arch, &cfg, 1, |_, _, _| Ok(())).unwrap();
        assert!(r.iter().all(|x| x.gdsn_weight == 1.0));
    }

    #[test]
    fn baseline_uses_singleton_bags() {
        let (arch, mut cfg, _) = tiny();
        cfg.mil = false;
        let s = generate(&SyntheticConfig { width: 16, height: 16, ..Default::default() }, 0).unwrap();
        let p = prepare_sample(&s.image, &s.annotations, &arch, &cfg).unwrap();
        assert!(p.bags.bags().iter().all(|b| b.members.len() == 1));
    }
}
