//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Real scalar the toolkit computes in: `f32` or `f64`.
///
/// Verification paths (gradient checks, oracles, acceptance) run at `f64`;
/// `f32` is available as a fast path for inference.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `-log(sigmoid(s))`, stable for large |s|.
#[inline]
pub fn softplus_neg<T: Scalar>(s: T) -> T {
    softplus(-s)
}

/// `log(1 + exp(s))` via `max(s, 0) + log1p(exp(-|s|))`.
#[inline]
pub fn softplus<T: Scalar>(s: T) -> T {
    s.max(T::zero()) + (-s.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Scalar>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &s in &[-5.0f64, -0.3, 0.0, 0.7, 4.0] {
            let naive = (1.0 + s.exp()).ln();
            assert!((softplus(s) - naive).abs() < 1e-14);
            assert!((softplus_neg(s) + sigmoid(s).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!(softplus_neg(1000.0f64) < 1e-300);
        assert!((softplus(1000.0f64) - 1000.0).abs() < 1e-12);
        assert!(sigmoid(0.0f32) == 0.5);
    }
}
