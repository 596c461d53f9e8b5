//! Small convolutional boundary detector with side outputs, a learned fusion
//! layer and tied-weight multi-resolution replication.
//!
//! Each stage is a `k x k` convolution followed by ReLU and, optionally, a 2x2
//! max-pool feeding the next stage. Every stage has a linear 1x1 side layer
//! whose score map is bilinearly resampled to the resolution of the original
//! image. Side maps of one pyramid level are fused with weights `h`; the
//! per-level fused maps are fused again with weights `g`. All pyramid levels
//! share the same parameters. Scores are raw (pre-sigmoid) values.

mod checkpoint;
mod forward;
pub(crate) mod layers;
mod sgd;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{backward, forward, ForwardPass, ScoreGrads, ScoreStack};
pub use sgd::Sgd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    /// Channels of the input image (1 for gray, 3 for RGB).
    pub input_channels: usize,
    /// Output channels of each trunk stage; its length is the stage count M.
    pub stage_channels: Vec<usize>,
    /// Odd convolution kernel size.
    pub kernel_size: usize,
    /// Whether a 2x2 max-pool follows each stage.
    pub pool_after: Vec<bool>,
    /// Number of pyramid levels S fused by the scale-fusion layer.
    pub scales: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_channels: 1,
            stage_channels: vec![8, 8, 8],
            kernel_size: 3,
            pool_after: vec![true, true, false],
            scales: 3,
        }
    }
}

impl Architecture {
    pub fn stages(&self) -> usize {
        self.stage_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.stage_channels.len() < 2 {
            return bad(format!("need at least 2 stages, got {}", self.stage_channels.len()));
        }
        if self.stage_channels.iter().any(|&c| c == 0) || self.input_channels == 0 {
            return bad("channel counts must be at least 1".into());
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if self.pool_after.len() != self.stage_channels.len() {
            return bad("pool_after must have one entry per stage".into());
        }
        if self.scales == 0 {
            return bad("scales must be at least 1".into());
        }
        Ok(())
    }

    /// Input channels of stage `m`.
    pub fn stage_input(&self, m: usize) -> usize {
        if m == 0 {
            self.input_channels
        } else {
            self.stage_channels[m - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    /// `[out][in][k][k]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideLayer<T> {
    pub weight: Vec<T>,
    /// Single bias, stored as a length-1 tensor.
    pub bias: Vec<T>,
}

/// Coarse grouping of tensors used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Trunk,
    Side,
    Fuse,
    ScaleFuse,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Trunk => "trunk",
            ParamGroup::Side => "side",
            ParamGroup::Fuse => "fuse",
            ParamGroup::ScaleFuse => "scale_fuse",
        }
    }
}

#[derive(Debug)]
pub struct TensorRef<'a, T> {
    pub name: String,
    pub group: ParamGroup,
    pub dims: Vec<usize>,
    pub data: &'a [T],
}

#[derive(Debug)]
pub struct TensorMut<'a, T> {
    pub name: String,
    pub group: ParamGroup,
    pub data: &'a mut [T],
}

/// All trainable tensors of the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    arch: Architecture,
    pub trunk: Vec<ConvLayer<T>>,
    pub side: Vec<SideLayer<T>>,
    /// Side-output fusion weights `h`, one per stage.
    pub fuse: Vec<T>,
    /// Cross-resolution fusion weights `g`, one per pyramid level.
    pub scale_fuse: Vec<T>,
}

impl<T: Scalar> NetworkParams<T> {
    /// All-zero tensors shaped for `arch`.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let k = arch.kernel_size;
        let trunk = (0..arch.stages())
            .map(|m| {
                let (ci, co) = (arch.stage_input(m), arch.stage_channels[m]);
                ConvLayer {
                    weight: vec![T::zero(); co * ci * k * k],
                    bias: vec![T::zero(); co],
                }
            })
            .collect();
        let side = arch
            .stage_channels
            .iter()
            .map(|&c| SideLayer {
                weight: vec![T::zero(); c],
                bias: vec![T::zero()],
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            trunk,
            side,
            fuse: vec![T::zero(); arch.stages()],
            scale_fuse: vec![T::zero(); arch.scales],
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch).expect("architecture already validated")
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let k = self.arch.kernel_size;
        let mut v = Vec::new();
        for (m, l) in self.trunk.iter().enumerate() {
            let (ci, co) = (self.arch.stage_input(m), self.arch.stage_channels[m]);
            v.push(TensorRef {
                name: format!("trunk.{m}.weight"),
                group: ParamGroup::Trunk,
                dims: vec![co, ci, k, k],
                data: &l.weight,
            });
            v.push(TensorRef {
                name: format!("trunk.{m}.bias"),
                group: ParamGroup::Trunk,
                dims: vec![co],
                data: &l.bias,
            });
        }
        for (m, l) in self.side.iter().enumerate() {
            v.push(TensorRef {
                name: format!("side.{m}.weight"),
                group: ParamGroup::Side,
                dims: vec![l.weight.len()],
                data: &l.weight,
            });
            v.push(TensorRef {
                name: format!("side.{m}.bias"),
                group: ParamGroup::Side,
                dims: vec![1],
                data: &l.bias,
            });
        }
        v.push(TensorRef {
            name: "fuse.weight".into(),
            group: ParamGroup::Fuse,
            dims: vec![self.fuse.len()],
            data: &self.fuse,
        });
        v.push(TensorRef {
            name: "scale_fuse.weight".into(),
            group: ParamGroup::ScaleFuse,
            dims: vec![self.scale_fuse.len()],
            data: &self.scale_fuse,
        });
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut v = Vec::new();
        for (m, l) in self.trunk.iter_mut().enumerate() {
            v.push(TensorMut {
                name: format!("trunk.{m}.weight"),
                group: ParamGroup::Trunk,
                data: &mut l.weight,
            });
            v.push(TensorMut {
                name: format!("trunk.{m}.bias"),
                group: ParamGroup::Trunk,
                data: &mut l.bias,
            });
        }
        for (m, l) in self.side.iter_mut().enumerate() {
            v.push(TensorMut {
                name: format!("side.{m}.weight"),
                group: ParamGroup::Side,
                data: &mut l.weight,
            });
            v.push(TensorMut {
                name: format!("side.{m}.bias"),
                group: ParamGroup::Side,
                data: &mut l.bias,
            });
        }
        v.push(TensorMut {
            name: "fuse.weight".into(),
            group: ParamGroup::Fuse,
            data: &mut self.fuse,
        });
        v.push(TensorMut {
            name: "scale_fuse.weight".into(),
            group: ParamGroup::ScaleFuse,
            data: &mut self.scale_fuse,
        });
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Parameters flattened in tensor order.
    pub fn to_flat(&self) -> Vec<T> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Deterministic initialization: Glorot-uniform weights, zero biases,
/// `h_m = 1/M`, `g_s = 1/S`.
pub fn init_params<T: Scalar>(arch: &Architecture, seed: u64) -> Result<NetworkParams<T>> {
    let mut p = NetworkParams::<T>::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k2 = arch.kernel_size * arch.kernel_size;
    for (m, layer) in p.trunk.iter_mut().enumerate() {
        let a = glorot_bound(arch.stage_input(m) * k2, arch.stage_channels[m] * k2);
        for w in &mut layer.weight {
            *w = T::lit(rng.random_range(-a..a));
        }
    }
    for layer in &mut p.side {
        let a = glorot_bound(layer.weight.len(), 1);
        for w in &mut layer.weight {
            *w = T::lit(rng.random_range(-a..a));
        }
    }
    let m = T::from_usize_lossy(arch.stages());
    p.fuse.iter_mut().for_each(|h| *h = T::one() / m);
    let s = T::from_usize_lossy(arch.scales);
    p.scale_fuse.iter_mut().for_each(|g| *g = T::one() / s);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let arch = Architecture::default();
        let a = init_params::<f64>(&arch, 7).unwrap();
        let b = init_params::<f64>(&arch, 7).unwrap();
        let bits = |p: &NetworkParams<f64>| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&init_params::<f64>(&arch, 8).unwrap()));
    }

    #[test]
    fn fusion_defaults() {
        let arch = Architecture::default();
        let p = init_params::<f64>(&arch, 0).unwrap();
        assert_eq!(p.fuse, vec![1.0 / 3.0; 3]);
        assert_eq!(p.scale_fuse, vec![1.0 / 3.0; 3]);
        assert!(p.trunk.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn glorot_formula_and_bounds() {
        assert_eq!(glorot_bound(9, 9), (6.0f64 / 18.0).sqrt());
        let arch = Architecture {
            input_channels: 1,
            stage_channels: vec![1, 1],
            kernel_size: 3,
            pool_after: vec![false, false],
            scales: 1,
        };
        let p = init_params::<f64>(&arch, 3).unwrap();
        let a = (6.0f64 / 18.0).sqrt();
        assert!(p.trunk[0].weight.iter().all(|w| w.abs() < a));
    }

    #[test]
    fn architecture_validation() {
        let mut a = Architecture::default();
        a.stage_channels = vec![4];
        a.pool_after = vec![false];
        assert!(a.validate().is_err());
        let mut a = Architecture::default();
        a.kernel_size = 2;
        assert!(a.validate().is_err());
        let mut a = Architecture::default();
        a.pool_after.pop();
        assert!(a.validate().is_err());
    }

    #[test]
    fn flat_round_trip() {
        let arch = Architecture::default();
        let p = init_params::<f64>(&arch, 1).unwrap();
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[0.0]).is_err());
    }
}
