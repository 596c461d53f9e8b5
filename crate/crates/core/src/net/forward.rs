use super::layers::{conv_backward, conv_forward, maxpool2, maxpool2_backward, relu, Planes};
use super::NetworkParams;
use crate::error::{Error, Result};
use crate::imagecore::{ImageGrid, Pyramid, Resampler};
use crate::scalar::Scalar;

/// Score maps produced by [`forward`], all at the pyramid's base resolution.
///
/// The same shape carries gradients with respect to each map ([`ScoreGrads`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStack<T> {
    /// `side[level][stage]`
    pub side: Vec<Vec<ImageGrid<T>>>,
    /// Side maps of each level fused with `h`.
    pub fused_levels: Vec<ImageGrid<T>>,
    /// Per-level fused maps combined with `g`.
    pub fused: ImageGrid<T>,
}

/// Gradients with respect to the maps of a [`ScoreStack`].
pub type ScoreGrads<T> = ScoreStack<T>;

impl<T: Scalar> ScoreStack<T> {
    pub fn zeros_like(&self) -> Self {
        let z = |g: &ImageGrid<T>| ImageGrid::zeros(g.width(), g.height(), 1).expect("valid dims");
        Self {
            side: self.side.iter().map(|lv| lv.iter().map(z).collect()).collect(),
            fused_levels: self.fused_levels.iter().map(z).collect(),
            fused: z(&self.fused),
        }
    }

    pub fn levels(&self) -> usize {
        self.side.len()
    }

    pub fn stages(&self) -> usize {
        self.side.first().map_or(0, |l| l.len())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fused.dims()
    }

    fn same_layout(&self, other: &Self) -> bool {
        self.side.len() == other.side.len()
            && self.fused_levels.len() == other.fused_levels.len()
            && self.side.iter().zip(&other.side).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.dims() == y.dims())
            })
            && self.fused.dims() == other.fused.dims()
    }
}

#[derive(Debug, Clone)]
struct StageCache<T> {
    input: Planes<T>,
    pre: Planes<T>,
    act: Planes<T>,
    pool_arg: Option<Vec<usize>>,
    upsample: Resampler,
}

/// Output of [`forward`] together with the intermediates [`backward`] needs.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub scores: ScoreStack<T>,
    cache: Option<Vec<Vec<StageCache<T>>>>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn into_scores(self) -> ScoreStack<T> {
        self.scores
    }

    /// Drop intermediates, keeping only the score maps.
    pub fn discard_intermediates(&mut self) {
        self.cache = None;
    }

    pub fn has_intermediates(&self) -> bool {
        self.cache.is_some()
    }

    /// ReLU on/off states and pooling winners of every stage, in a fixed order.
    /// Two passes with equal patterns lie on the same smooth piece of the network.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for stage in self.cache.iter().flatten().flatten() {
            out.extend(stage.pre.data.iter().map(|&v| usize::from(v > T::zero())));
            if let Some(arg) = &stage.pool_arg {
                out.extend_from_slice(arg);
            }
        }
        out
    }
}

fn to_planes<T: Scalar>(img: &ImageGrid<T>) -> Planes<T> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut p = Planes::zeros(c, w, h);
    for (i, px) in img.data().chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            p.data[ch * w * h + i] = v;
        }
    }
    p
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Run every pyramid level through the shared parameters and fuse the results.
pub fn forward<T: Scalar>(params: &NetworkParams<T>, pyramid: &Pyramid<T>) -> Result<ForwardPass<T>> {
    let arch = params.arch();
    if pyramid.len() != arch.scales {
        return Err(Error::DimensionMismatch(format!(
            "pyramid has {} levels but the architecture fuses {} scales",
            pyramid.len(),
            arch.scales
        )));
    }
    let (rw, rh) = pyramid.base_dims();
    let k = arch.kernel_size;
    let n_ref = rw * rh;

    let mut side = Vec::with_capacity(pyramid.len());
    let mut fused_levels = Vec::with_capacity(pyramid.len());
    let mut cache = Vec::with_capacity(pyramid.len());
    for (s, level) in pyramid.levels().iter().enumerate() {
        if level.image.channels() != arch.input_channels {
            return Err(Error::DimensionMismatch(format!(
                "level {s}, stage 0: input has {} channels, expected {}",
                level.image.channels(),
                arch.input_channels
            )));
        }
        let mut x = to_planes(&level.image);
        let mut level_side = Vec::with_capacity(arch.stages());
        let mut level_cache = Vec::with_capacity(arch.stages());
        let mut fused = vec![T::zero(); n_ref];
        for m in 0..arch.stages() {
            let conv = &params.trunk[m];
            let c_out = arch.stage_channels[m];
            if conv.weight.len() != c_out * x.channels * k * k {
                return Err(Error::DimensionMismatch(format!(
                    "level {s}, stage {m}: weights do not match {} input channels",
                    x.channels
                )));
            }
            let pre = conv_forward(&x, &conv.weight, &conv.bias, c_out, k);
            let act = relu(&pre);

            let sl = &params.side[m];
            let mut raw = vec![sl.bias[0]; act.plane_len()];
            for c in 0..c_out {
                axpy(sl.weight[c], act.plane(c), &mut raw);
            }
            let upsample = Resampler::new(act.width, act.height, rw, rh)?;
            let mut map = vec![T::zero(); n_ref];
            upsample.apply_plane(&raw, &mut map);
            axpy(params.fuse[m], &map, &mut fused);
            level_side.push(ImageGrid::new(rw, rh, 1, map)?);

            let (next, pool_arg) = if arch.pool_after[m] {
                let (p, a) = maxpool2(&act);
                (p, Some(a))
            } else {
                (act.clone(), None)
            };
            level_cache.push(StageCache {
                input: std::mem::replace(&mut x, next),
                pre,
                act,
                pool_arg,
                upsample,
            });
        }
        side.push(level_side);
        fused_levels.push(ImageGrid::new(rw, rh, 1, fused)?);
        cache.push(level_cache);
    }

    let mut fused = vec![T::zero(); n_ref];
    for (s, fl) in fused_levels.iter().enumerate() {
        axpy(params.scale_fuse[s], fl.data(), &mut fused);
    }
    Ok(ForwardPass {
        scores: ScoreStack {
            side,
            fused_levels,
            fused: ImageGrid::new(rw, rh, 1, fused)?,
        },
        cache: Some(cache),
    })
}

/// Exact parameter gradients given gradients with respect to every score map.
///
/// Tied weights accumulate contributions from all pyramid levels.
pub fn backward<T: Scalar>(
    params: &NetworkParams<T>,
    pass: &ForwardPass<T>,
    grads: &ScoreGrads<T>,
) -> Result<NetworkParams<T>> {
    let cache = pass.cache.as_ref().ok_or(Error::MissingIntermediates)?;
    if !pass.scores.same_layout(grads) {
        return Err(Error::DimensionMismatch("score gradients do not match the forward pass".into()));
    }
    let arch = params.arch();
    let k = arch.kernel_size;
    let mut out = params.zeros_like();
    let scores = &pass.scores;
    let g_final = grads.fused.data();

    for (s, level_cache) in cache.iter().enumerate() {
        out.scale_fuse[s] += dot(scores.fused_levels[s].data(), g_final);
        let mut g_fs = grads.fused_levels[s].data().to_vec();
        axpy(params.scale_fuse[s], g_final, &mut g_fs);

        // gradient flowing into the output of the stage below, from the stage above
        let mut from_above: Option<Planes<T>> = None;
        for m in (0..arch.stages()).rev() {
            let sc = &level_cache[m];
            out.fuse[m] += dot(scores.side[s][m].data(), &g_fs);
            let mut g_map = grads.side[s][m].data().to_vec();
            axpy(params.fuse[m], &g_fs, &mut g_map);

            let mut g_raw = vec![T::zero(); sc.act.plane_len()];
            sc.upsample.adjoint_plane(&g_map, &mut g_raw);
            out.side[m].bias[0] += g_raw.iter().copied().sum::<T>();

            let mut g_act = match (from_above.take(), &sc.pool_arg) {
                (Some(g_next), Some(arg)) => maxpool2_backward(&g_next, arg, sc.act.width, sc.act.height),
                (Some(g_next), None) => g_next,
                (None, _) => Planes::zeros(sc.act.channels, sc.act.width, sc.act.height),
            };
            let sl = &params.side[m];
            for c in 0..sc.act.channels {
                out.side[m].weight[c] += dot(sc.act.plane(c), &g_raw);
                axpy(sl.weight[c], &g_raw, g_act.plane_mut(c));
            }
            for (g, &p) in g_act.data.iter_mut().zip(&sc.pre.data) {
                if p <= T::zero() {
                    *g = T::zero();
                }
            }

            let mut g_in = (m > 0).then(|| Planes::zeros(sc.input.channels, sc.input.width, sc.input.height));
            let layer = &mut out.trunk[m];
            conv_backward(
                &sc.input,
                &params.trunk[m].weight,
                &g_act,
                k,
                &mut layer.weight,
                &mut layer.bias,
                g_in.as_mut(),
            );
            from_above = g_in;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::build_pyramid;
    use crate::net::{init_params, Architecture};

    fn small_arch(scales: usize) -> Architecture {
        Architecture {
            input_channels: 1,
            stage_channels: vec![2, 3, 2],
            kernel_size: 3,
            pool_after: vec![true, true, false],
            scales,
        }
    }

    #[test]
    fn zero_trunk_gives_constant_side_maps() {
        let arch = small_arch(1);
        let mut p = init_params::<f64>(&arch, 1).unwrap();
        for l in &mut p.trunk {
            l.weight.iter_mut().for_each(|w| *w = 0.0);
        }
        for l in &mut p.side {
            l.bias[0] = 0.7;
        }
        let img = ImageGrid::from_fn(8, 6, |x, y| ((x * 3 + y) % 5) as f64 / 5.0).unwrap();
        let pass = forward(&p, &Pyramid::single(img)).unwrap();
        for m in &pass.scores.side[0] {
            assert!(m.data().iter().all(|&v| v == 0.7));
        }
        let hsum: f64 = p.fuse.iter().sum();
        assert!(pass.scores.fused_levels[0].data().iter().all(|&v| (v - 0.7 * hsum).abs() < 1e-15));
        // g = (1) for a single scale
        assert_eq!(pass.scores.fused, pass.scores.fused_levels[0]);
    }

    #[test]
    fn level_count_and_channels_checked() {
        let p = init_params::<f64>(&small_arch(3), 1).unwrap();
        let img = ImageGrid::filled(8, 8, 1, 0.5).unwrap();
        assert!(matches!(forward(&p, &Pyramid::single(img.clone())), Err(Error::DimensionMismatch(_))));
        let rgb = ImageGrid::filled(8, 8, 3, 0.5).unwrap();
        let pyr = build_pyramid(&rgb, 2.0, 3).unwrap();
        match forward(&p, &pyr) {
            Err(Error::DimensionMismatch(msg)) => assert!(msg.contains("level 0, stage 0")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backward_needs_intermediates_and_zero_grads_give_zero() {
        let p = init_params::<f64>(&small_arch(2), 4).unwrap();
        let img = ImageGrid::from_fn(6, 6, |x, y| ((x + 2 * y) % 4) as f64 / 4.0).unwrap();
        let pyr = build_pyramid(&img, 2.0, 2).unwrap();
        let mut pass = forward(&p, &pyr).unwrap();
        let zero = pass.scores.zeros_like();
        let g = backward(&p, &pass, &zero).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        pass.discard_intermediates();
        assert!(matches!(backward(&p, &pass, &zero), Err(Error::MissingIntermediates)));
    }

    #[test]
    fn unit_scale_pyramid_matches_single_resolution() {
        let p = init_params::<f64>(&small_arch(1), 9).unwrap();
        let img = ImageGrid::from_fn(9, 7, |x, y| ((x * x + y) % 7) as f64 / 7.0).unwrap();
        let a = forward(&p, &build_pyramid(&img, 1.0, 1).unwrap()).unwrap().into_scores();
        let b = forward(&p, &Pyramid::single(img)).unwrap().into_scores();
        let bits = |s: &ScoreStack<f64>| s.fused.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a, b);
    }
}
