//! Training objectives on raw scores: class-balanced cross-entropy, the
//! multiple-instance (bag max) loss, the graduated deep-supervision schedule
//! and the combined side + fusion objective. Each loss returns its value and
//! exact gradient with respect to the scores.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bags::BagSet;
use crate::error::{Error, Result};
use crate::imagecore::{ImageGrid, Mask};
use crate::net::{ScoreGrads, ScoreStack};
use crate::scalar::{sigmoid, softplus, softplus_neg, Scalar};

/// How per-pixel terms are reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Sum,
    /// Divide by the number of supervised (non-ignored) terms.
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig<T> {
    /// Positive-class weight; `None` uses the per-image ratio `|Y-| / (|Y-| + |Y+|)`.
    pub beta: Option<T>,
    /// Importance `alpha_m` of each side loss.
    pub side_weights: Vec<T>,
    /// Use the bag-max loss instead of per-pixel cross-entropy.
    pub mil: bool,
    pub reduction: Reduction,
}

impl<T: Scalar> LossConfig<T> {
    pub fn new(stages: usize, mil: bool) -> Self {
        Self {
            beta: None,
            side_weights: vec![T::one(); stages],
            mil,
            reduction: Reduction::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.beta {
            check_beta(b)?;
        }
        if self.side_weights.iter().any(|&a| !(a >= T::zero()) || !a.is_finite()) {
            return Err(Error::InvalidArgument("side-loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Epoch bookkeeping and optimizer settings for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epoch: usize,
    pub total_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::InvalidArgument("total epochs must be at least 1".into()));
        }
        if self.epoch > self.total_epochs {
            return Err(Error::InvalidArgument(format!(
                "epoch {} exceeds total {}",
                self.epoch, self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn at_epoch(self, epoch: usize) -> Self {
        Self { epoch, ..self }
    }
}

/// Loss value with its gradient with respect to the score map.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grad: ImageGrid<T>,
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if beta > T::zero() && beta < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {beta}")))
    }
}

/// `|neg| / (|neg| + |pos|)`, or 1/2 when either class is empty.
pub fn auto_beta<T: Scalar>(n_pos: usize, n_neg: usize) -> T {
    if n_pos == 0 || n_neg == 0 {
        T::lit(0.5)
    } else {
        T::from_usize_lossy(n_neg) / T::from_usize_lossy(n_neg + n_pos)
    }
}

fn normalizer<T: Scalar>(reduction: Reduction, count: usize) -> T {
    match reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::one() / T::from_usize_lossy(count.max(1)),
    }
}

fn check_scores<T: Scalar>(scores: &ImageGrid<T>, dims: (usize, usize), what: &str) -> Result<()> {
    if scores.channels() != 1 || scores.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "{what}: scores {}x{}x{} vs labels {}x{}",
            scores.width(),
            scores.height(),
            scores.channels(),
            dims.0,
            dims.1
        )));
    }
    Ok(())
}

/// Class-balanced cross-entropy
/// `-beta * sum_{Y+} log sigma(s) - (1 - beta) * sum_{Y-} log(1 - sigma(s))`.
///
/// Don't-care pixels contribute neither loss nor gradient.
pub fn balanced_ce<T: Scalar>(
    scores: &ImageGrid<T>,
    labels: &Mask,
    beta: T,
    dontcare: Option<&Mask>,
    reduction: Reduction,
) -> Result<LossGrad<T>> {
    check_beta(beta)?;
    check_scores(scores, labels.dims(), "balanced_ce")?;
    if let Some(dc) = dontcare {
        if dc.dims() != labels.dims() {
            return Err(Error::DimensionMismatch("balanced_ce: don't-care mask".into()));
        }
    }
    let w_pos = beta;
    let w_neg = T::one() - beta;
    let mut grad = vec![T::zero(); scores.pixel_count()];
    let mut loss = T::zero();
    let mut count = 0usize;
    for (j, (&s, g)) in scores.data().iter().zip(grad.iter_mut()).enumerate() {
        if dontcare.is_some_and(|m| m.at(j)) {
            continue;
        }
        count += 1;
        if labels.at(j) {
            loss += w_pos * softplus_neg(s);
            *g = w_pos * (sigmoid(s) - T::one());
        } else {
            loss += w_neg * softplus(s);
            *g = w_neg * sigmoid(s);
        }
    }
    let k = normalizer::<T>(reduction, count);
    grad.iter_mut().for_each(|g| *g *= k);
    Ok(LossGrad {
        loss: loss * k,
        grad: ImageGrid::new(scores.width(), scores.height(), 1, grad)?,
    })
}

/// Index of the highest-scoring member; the lowest pixel index wins ties.
pub fn bag_argmax<T: Scalar>(scores: &[T], members: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for &m in members {
        let s = scores[m];
        match best {
            Some((bi, bs)) if s < bs || (s == bs && m > bi) => {}
            _ => best = Some((m, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Argmax member of every bag, in bag order.
pub fn bag_argmax_all<T: Scalar>(scores: &[T], bags: &BagSet) -> Vec<usize> {
    bags.bags()
        .iter()
        .map(|b| bag_argmax(scores, &b.members).unwrap_or(b.anchor))
        .collect()
}

/// Multiple-instance loss: every bag is scored by its best member and
/// every negative pixel is pushed down.
///
/// Per bag the term is `beta * -log sigma(max_k s_k)`; its subgradient goes to
/// the argmax member only. Negatives contribute `(1 - beta) * -log(1 - sigma(s))`.
pub fn mil_loss<T: Scalar>(scores: &ImageGrid<T>, bags: &BagSet, beta: T, reduction: Reduction) -> Result<LossGrad<T>> {
    check_beta(beta)?;
    check_scores(scores, bags.dims(), "mil_loss")?;
    let s = scores.data();
    let w_pos = beta;
    let w_neg = T::one() - beta;
    let mut grad = vec![T::zero(); s.len()];
    let mut loss = T::zero();
    for &j in bags.negatives() {
        loss += w_neg * softplus(s[j]);
        grad[j] += w_neg * sigmoid(s[j]);
    }
    for bag in bags.bags() {
        let k = bag_argmax(s, &bag.members).ok_or(Error::EmptyBag { anchor: bag.anchor })?;
        loss += w_pos * softplus_neg(s[k]);
        grad[k] += w_pos * (sigmoid(s[k]) - T::one());
    }
    let k = normalizer::<T>(reduction, bags.negatives().len() + bags.bags().len());
    grad.iter_mut().for_each(|g| *g *= k);
    Ok(LossGrad {
        loss: loss * k,
        grad: ImageGrid::new(scores.width(), scores.height(), 1, grad)?,
    })
}

/// Side-loss weight `1 - t/T` of graduated deep supervision.
pub fn gdsn_weight<T: Scalar>(epoch: usize, total_epochs: usize) -> Result<T> {
    if total_epochs == 0 {
        return Err(Error::InvalidArgument("total epochs must be at least 1".into()));
    }
    if epoch > total_epochs {
        return Err(Error::InvalidArgument(format!("epoch {epoch} exceeds total {total_epochs}")));
    }
    Ok(T::one() - T::from_usize_lossy(epoch) / T::from_usize_lossy(total_epochs))
}

/// Per-pixel supervision derived from a bag set when MIL is off: anchors are
/// positive, every other covered pixel (including non-anchor bag members) is negative.
pub fn pixel_labels(bags: &BagSet) -> (Mask, Mask) {
    let (w, h) = bags.dims();
    let labels = bags.anchors();
    let mut ignored = Mask::empty(w, h).expect("bag set dims are valid");
    for i in bags.ignored() {
        ignored.set(i % w, i / w, true);
    }
    (labels, ignored)
}

/// Loss used for one score map under `cfg`.
#[derive(Debug, Clone)]
pub struct Supervision<'a, T> {
    bags: &'a BagSet,
    mode: SupervisionMode<T>,
    reduction: Reduction,
}

#[derive(Debug, Clone)]
enum SupervisionMode<T> {
    Mil { beta: T },
    Pixel { beta: T, labels: Mask, ignored: Mask },
}

impl<'a, T: Scalar> Supervision<'a, T> {
    pub fn new(bags: &'a BagSet, cfg: &LossConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let mode = if cfg.mil {
            let beta = cfg.beta.unwrap_or_else(|| auto_beta(bags.bags().len(), bags.negatives().len()));
            SupervisionMode::Mil { beta }
        } else {
            let (labels, ignored) = pixel_labels(bags);
            let n_pos = labels.count();
            let n_neg = labels.len() - n_pos - ignored.count();
            let beta = cfg.beta.unwrap_or_else(|| auto_beta(n_pos, n_neg));
            SupervisionMode::Pixel { beta, labels, ignored }
        };
        Ok(Self {
            bags,
            mode,
            reduction: cfg.reduction,
        })
    }

    pub fn beta(&self) -> T {
        match &self.mode {
            SupervisionMode::Mil { beta } | SupervisionMode::Pixel { beta, .. } => *beta,
        }
    }

    pub fn eval(&self, scores: &ImageGrid<T>) -> Result<LossGrad<T>> {
        match &self.mode {
            SupervisionMode::Mil { beta } => mil_loss(scores, self.bags, *beta, self.reduction),
            SupervisionMode::Pixel { beta, labels, ignored } => {
                balanced_ce(scores, labels, *beta, Some(ignored), self.reduction)
            }
        }
    }
}

/// Value and per-map gradients of the combined objective.
#[derive(Debug, Clone)]
pub struct TotalLoss<T> {
    pub total: T,
    /// `sum_m alpha_m * l^m`, before the schedule weight.
    pub side: T,
    pub fuse: T,
    pub gdsn_weight: T,
    pub grads: ScoreGrads<T>,
}

/// `(1 - t/T) * sum_m alpha_m * l^m + l_fuse`.
///
/// With several pyramid levels `l^m` averages the stage-`m` side losses over
/// levels; the fusion loss applies to the cross-scale fused map. Gradients of
/// the side terms land in `grads.side`, those of the fusion term in `grads.fused`.
pub fn total_loss<T: Scalar>(
    stack: &ScoreStack<T>,
    bags: &BagSet,
    cfg: &LossConfig<T>,
    sched: &TrainSchedule,
) -> Result<TotalLoss<T>> {
    sched.validate()?;
    if cfg.side_weights.len() != stack.stages() {
        return Err(Error::DimensionMismatch(format!(
            "{} side weights for {} stages",
            cfg.side_weights.len(),
            stack.stages()
        )));
    }
    let sup = Supervision::new(bags, cfg)?;
    let weight: T = gdsn_weight(sched.epoch, sched.total_epochs)?;
    let mut grads = stack.zeros_like();
    let level_norm = T::one() / T::from_usize_lossy(stack.levels().max(1));

    let mut side = T::zero();
    for (s, level) in stack.side.iter().enumerate() {
        for (m, map) in level.iter().enumerate() {
            let alpha = cfg.side_weights[m];
            let lg = sup.eval(map)?;
            side += alpha * level_norm * lg.loss;
            let scale = weight * alpha * level_norm;
            for (g, &d) in grads.side[s][m].data_mut().iter_mut().zip(lg.grad.data()) {
                *g = scale * d;
            }
        }
    }
    let fuse = sup.eval(&stack.fused)?;
    grads.fused = fuse.grad;
    Ok(TotalLoss {
        total: weight * side + fuse.loss,
        side,
        fuse: fuse.loss,
        gdsn_weight: weight,
        grads,
    })
}

/// One row of the training loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub side_loss: f64,
    pub fuse_loss: f64,
    pub gdsn_weight: f64,
    pub total: f64,
}

/// CSV with header `epoch,side_loss,fuse_loss,gdsn_weight,total`.
pub fn write_loss_csv(records: &[LossRecord], mut out: impl Write) -> Result<()> {
    writeln!(out, "epoch,side_loss,fuse_loss,gdsn_weight,total")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.side_loss, r.fuse_loss, r.gdsn_weight, r.total
        )?;
    }
    Ok(())
}
