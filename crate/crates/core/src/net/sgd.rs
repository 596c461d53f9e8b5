use super::NetworkParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// SGD with classical momentum: `v <- momentum * v - lr * grad; p <- p + v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Option<NetworkParams<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(lr: T, momentum: T) -> Result<Self> {
        if !(lr > T::zero()) || !lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {lr}")));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: None,
        })
    }

    pub fn velocity(&self) -> Option<&NetworkParams<T>> {
        self.velocity.as_ref()
    }

    /// Apply one update. Refuses the step (leaving params and velocity untouched)
    /// when any gradient is non-finite.
    pub fn step(&mut self, params: &mut NetworkParams<T>, grads: &NetworkParams<T>) -> Result<()> {
        if grads.arch() != params.arch() {
            return Err(Error::DimensionMismatch("gradient architecture differs from parameters".into()));
        }
        if let Some(t) = grads.tensors().iter().find(|t| t.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient { tensor: t.name.clone() });
        }
        let vel = self.velocity.get_or_insert_with(|| params.zeros_like());
        let (lr, mu) = (self.lr, self.momentum);
        for ((p, g), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(vel.tensors_mut()) {
            for ((pi, &gi), vi) in p.data.iter_mut().zip(g.data).zip(v.data.iter_mut()) {
                *vi = mu * *vi - lr * gi;
                *pi += *vi;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Architecture};

    fn arch() -> Architecture {
        Architecture {
            input_channels: 1,
            stage_channels: vec![1, 1],
            kernel_size: 1,
            pool_after: vec![false, false],
            scales: 1,
        }
    }

    #[test]
    fn vanilla_sgd_when_momentum_zero() {
        let mut p = init_params::<f64>(&arch(), 2).unwrap();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        let gflat: Vec<f64> = (0..before.len()).map(|i| i as f64 * 0.1 - 0.3).collect();
        g.set_flat(&gflat).unwrap();
        let mut opt = Sgd::new(0.5, 0.0).unwrap();
        opt.step(&mut p, &g).unwrap();
        for ((a, b), gi) in p.to_flat().iter().zip(&before).zip(&gflat) {
            assert_eq!(*a, b + (0.0 * 0.0 - 0.5 * gi));
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = init_params::<f64>(&arch(), 2).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = Sgd::new(0.1, 0.9).unwrap();
        for _ in 0..5 {
            opt.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn two_momentum_steps_match_hand_unrolling() {
        // scalar toy loss 0.5 * x^2 on the first trunk weight; gradient = x
        let mut p = NetworkParams::<f64>::zeros(&arch()).unwrap();
        p.trunk[0].weight[0] = 1.0;
        let mut opt = Sgd::new(0.1, 0.9).unwrap();
        for _ in 0..2 {
            let mut g = p.zeros_like();
            g.trunk[0].weight[0] = p.trunk[0].weight[0];
            opt.step(&mut p, &g).unwrap();
        }
        // v1 = -0.1, x1 = 0.9; v2 = 0.9*(-0.1) - 0.1*0.9 = -0.18, x2 = 0.72
        assert!((p.trunk[0].weight[0] - 0.72).abs() < 1e-15);
        assert!((opt.velocity().unwrap().trunk[0].weight[0] + 0.18).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_refused() {
        let mut p = init_params::<f64>(&arch(), 2).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.side[1].bias[0] = f64::NAN;
        let mut opt = Sgd::new(0.1, 0.5).unwrap();
        match opt.step(&mut p, &g) {
            Err(Error::NonFiniteGradient { tensor }) => assert_eq!(tensor, "side.1.bias"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, before);
        assert!(opt.velocity().is_none());
    }

    #[test]
    fn hyperparameters_validated() {
        assert!(Sgd::<f64>::new(0.0, 0.5).is_err());
        assert!(Sgd::<f64>::new(0.1, 1.0).is_err());
        assert!(Sgd::<f64>::new(0.1, -0.1).is_err());
    }
}
