//! Central finite-difference verification of the hand-written gradients.
//!
//! Every parameter of the network is perturbed by `±eps` and the change of the
//! combined loss is compared with the analytic gradient. A check is only
//! meaningful on one smooth piece of the objective, so each perturbation also
//! compares ReLU states, pooling winners and bag argmaxes with the unperturbed
//! pass. When they differ the step is shrunk; if that does not help the whole
//! instance is redrawn from the next seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bags::{build_bags, BagSet};
use crate::error::{Error, Result};
use crate::imagecore::{build_pyramid, ImageGrid, Mask, Pyramid};
use crate::losses::{bag_argmax_all, balanced_ce, mil_loss, total_loss, LossConfig, Reduction, TrainSchedule};
use crate::net::{backward, forward, init_params, Architecture, NetworkParams, ScoreStack};

/// Settings of one gradient-check run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub arch: Architecture,
    pub width: usize,
    pub height: usize,
    pub top_upsample: f64,
    pub mil: bool,
    pub bag_radius: f64,
    pub total_epochs: usize,
    pub eps: f64,
    pub tol: f64,
    /// Denominator floor of the relative error.
    pub abs_floor: f64,
    /// Instances redrawn before giving up on finding a smooth neighbourhood.
    pub max_rerolls: usize,
    /// Negative control: scale one analytic tensor by `1 + corrupt`.
    pub corrupt: Option<f64>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::default(),
            width: 10,
            height: 10,
            top_upsample: 2.0,
            mil: true,
            bag_radius: 1.0,
            total_epochs: 10,
            eps: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-6,
            max_rerolls: 20,
            corrupt: None,
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GroupReport {
    pub group: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter with the largest error.
    pub worst: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GradCheckReport {
    pub seed: u64,
    /// Seed of the instance actually checked after rerolls.
    pub instance_seed: u64,
    pub epoch: usize,
    pub total_epochs: usize,
    /// Perturbations that needed a smaller step to stay on one smooth piece.
    pub shrunk_steps: usize,
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Random image, network and bags for one check.
#[derive(Debug, Clone)]
pub struct Instance {
    pub pyramid: Pyramid<f64>,
    pub params: NetworkParams<f64>,
    pub bags: BagSet,
}

/// Draw a check instance. Parameters start from the usual initialization and
/// receive an extra random offset so that biases and fusion weights are generic.
pub fn random_instance(cfg: &GradCheckConfig, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h, c) = (cfg.width, cfg.height, cfg.arch.input_channels);
    let data: Vec<f64> = (0..w * h * c).map(|_| rng.random_range(0.0..1.0)).collect();
    let img = ImageGrid::new(w, h, c, data)?;
    let pyramid = build_pyramid(&img, cfg.top_upsample, cfg.arch.scales)?;
    let mut params = init_params::<f64>(&cfg.arch, rng.random())?;
    for t in params.tensors_mut() {
        for v in t.data.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    // a few random boundary strokes
    let mut pos = Mask::empty(w, h)?;
    for _ in 0..3 {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let horizontal: bool = rng.random();
        let len = rng.random_range(2..w.min(h).max(3));
        for t in 0..len {
            let (x, y) = if horizontal { (x0 + t, y0) } else { (x0, y0 + t) };
            if x < w && y < h {
                pos.set(x, y, true);
            }
        }
    }
    let bags = build_bags(&pos, cfg.bag_radius, None)?;
    Ok(Instance { pyramid, params, bags })
}

struct Eval {
    loss: f64,
    pattern: Vec<usize>,
}

fn score_pattern(stack: &ScoreStack<f64>, bags: &BagSet, out: &mut Vec<usize>) {
    for level in &stack.side {
        for map in level {
            out.extend(bag_argmax_all(map.data(), bags));
        }
    }
    out.extend(bag_argmax_all(stack.fused.data(), bags));
}

fn evaluate(inst: &Instance, params: &NetworkParams<f64>, cfg: &LossConfig<f64>, sched: &TrainSchedule) -> Result<Eval> {
    let pass = forward(params, &inst.pyramid)?;
    let mut pattern = pass.activation_pattern();
    if cfg.mil {
        score_pattern(&pass.scores, &inst.bags, &mut pattern);
    }
    let loss = total_loss(&pass.scores, &inst.bags, cfg, sched)?.total;
    Ok(Eval { loss, pattern })
}

enum Outcome {
    Report(Vec<GroupReport>, usize),
    Kinked,
}

fn check_instance(inst: &Instance, gc: &GradCheckConfig, epoch: usize) -> Result<Outcome> {
    let loss_cfg = LossConfig {
        mil: gc.mil,
        ..LossConfig::new(gc.arch.stages(), gc.mil)
    };
    let sched = TrainSchedule {
        epoch,
        total_epochs: gc.total_epochs,
        lr: 1e-3,
        momentum: 0.9,
        batch_size: 1,
    };
    let pass = forward(&inst.params, &inst.pyramid)?;
    let tl = total_loss(&pass.scores, &inst.bags, &loss_cfg, &sched)?;
    let mut grads = backward(&inst.params, &pass, &tl.grads)?;
    if let Some(c) = gc.corrupt {
        for v in grads.trunk[0].weight.iter_mut() {
            *v *= 1.0 + c;
        }
    }
    let base = evaluate(inst, &inst.params, &loss_cfg, &sched)?;
    let analytic = grads.to_flat();
    let mut flat = inst.params.to_flat();
    let names: Vec<(String, String, usize)> = inst
        .params
        .tensors()
        .iter()
        .map(|t| (t.group.name().to_string(), t.name.clone(), t.data.len()))
        .collect();

    let mut probe = inst.params.clone();
    let mut groups: Vec<GroupReport> = Vec::new();
    let mut shrunk = 0;
    let mut idx = 0;
    for (group, tensor, len) in names {
        let gi = match groups.iter().position(|g| g.group == group) {
            Some(i) => i,
            None => {
                groups.push(GroupReport {
                    group: group.clone(),
                    checked: 0,
                    max_rel_err: 0.0,
                    worst: String::new(),
                });
                groups.len() - 1
            }
        };
        for e in 0..len {
            let orig = flat[idx];
            let mut step = gc.eps;
            let mut numeric = None;
            for attempt in 0..3 {
                flat[idx] = orig + step;
                probe.set_flat(&flat)?;
                let plus = evaluate(inst, &probe, &loss_cfg, &sched)?;
                flat[idx] = orig - step;
                probe.set_flat(&flat)?;
                let minus = evaluate(inst, &probe, &loss_cfg, &sched)?;
                flat[idx] = orig;
                if plus.pattern == base.pattern && minus.pattern == base.pattern {
                    numeric = Some((plus.loss - minus.loss) / (2.0 * step));
                    if attempt > 0 {
                        shrunk += 1;
                    }
                    break;
                }
                step /= 16.0;
            }
            let Some(numeric) = numeric else {
                return Ok(Outcome::Kinked);
            };
            let err = relative_error(analytic[idx], numeric, gc.abs_floor);
            let g = &mut groups[gi];
            g.checked += 1;
            if err > g.max_rel_err || g.worst.is_empty() {
                g.max_rel_err = err;
                g.worst = format!("{tensor}[{e}]");
            }
            idx += 1;
        }
    }
    Ok(Outcome::Report(groups, shrunk))
}

/// Check every network parameter under the combined loss at `epoch`.
pub fn check_network(gc: &GradCheckConfig, seed: u64, epoch: usize) -> Result<GradCheckReport> {
    gc.arch.validate()?;
    if !(gc.eps > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    for r in 0..=gc.max_rerolls {
        let instance_seed = seed.wrapping_add((r as u64) << 32);
        let inst = random_instance(gc, instance_seed)?;
        if let Outcome::Report(groups, shrunk_steps) = check_instance(&inst, gc, epoch)? {
            let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
            return Ok(GradCheckReport {
                seed,
                instance_seed,
                epoch,
                total_epochs: gc.total_epochs,
                shrunk_steps,
                groups,
                max_rel_err,
                passed: max_rel_err < gc.tol,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: gc.max_rerolls + 1,
        residuals: Vec::new(),
    })
}

/// Finite-difference check of the two pixel losses with respect to the scores.
pub fn check_losses(gc: &GradCheckConfig, seed: u64) -> Result<Vec<GroupReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (gc.width, gc.height);
    for _ in 0..=gc.max_rerolls {
        let scores: Vec<f64> = (0..w * h).map(|_| rng.random_range(-3.0..3.0)).collect();
        let scores = ImageGrid::new(w, h, 1, scores)?;
        let labels = Mask::from_fn(w, h, |_, _| rng.random_bool(0.3))?;
        let dontcare = Mask::from_fn(w, h, |_, _| rng.random_bool(0.1))?;
        let pos = Mask::from_fn(w, h, |_, _| rng.random_bool(0.1))?;
        let bags = build_bags(&pos, gc.bag_radius, Some(&dontcare))?;
        let beta = rng.random_range(0.1..0.9);

        let ce = |s: &ImageGrid<f64>| balanced_ce(s, &labels, beta, Some(&dontcare), Reduction::Mean);
        let mil = |s: &ImageGrid<f64>| mil_loss(s, &bags, beta, Reduction::Mean);
        let base_arg = bag_argmax_all(scores.data(), &bags);
        let mut reports = Vec::new();
        let mut kinked = false;
        for (name, f) in [
            ("loss.balanced_ce", &ce as &dyn Fn(&ImageGrid<f64>) -> Result<_>),
            ("loss.mil", &mil),
        ] {
            let analytic = f(&scores)?.grad;
            let mut rep = GroupReport {
                group: name.into(),
                checked: 0,
                max_rel_err: 0.0,
                worst: String::new(),
            };
            let mut probe = scores.clone();
            for j in 0..w * h {
                let orig = probe.data()[j];
                probe.data_mut()[j] = orig + gc.eps;
                let same_p = bag_argmax_all(probe.data(), &bags) == base_arg;
                let lp = f(&probe)?.loss;
                probe.data_mut()[j] = orig - gc.eps;
                let same_m = bag_argmax_all(probe.data(), &bags) == base_arg;
                let lm = f(&probe)?.loss;
                probe.data_mut()[j] = orig;
                if !(same_p && same_m) {
                    kinked = true;
                    break;
                }
                let err = relative_error(analytic.data()[j], (lp - lm) / (2.0 * gc.eps), gc.abs_floor);
                rep.checked += 1;
                if err > rep.max_rel_err || rep.worst.is_empty() {
                    rep.max_rel_err = err;
                    rep.worst = format!("score[{j}]");
                }
            }
            reports.push(rep);
        }
        if !kinked {
            return Ok(reports);
        }
    }
    Err(Error::NoConvergence {
        iterations: gc.max_rerolls + 1,
        residuals: Vec::new(),
    })
}
