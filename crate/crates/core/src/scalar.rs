use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the model is computed in.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + ScalarOperand
    + LinalgScalar
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log Σ exp(x)`; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Scalar>(xs: impl IntoIterator<Item = T> + Clone) -> T {
    let max = xs
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |acc, x| acc.max(x));
    if !max.is_finite() {
        return max;
    }
    let sum: T = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}
