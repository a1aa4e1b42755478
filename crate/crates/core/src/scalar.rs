//! Scalar abstraction shared by plain `f64` evaluation and tape-recorded
//! expressions.
//!
//! Every constitutive formula in this crate is written once against
//! [`Scalar`]. The forward generator instantiates it with `f64`; the loss
//! assembly instantiates it with [`crate::autodiff::Expr`].

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Lifts a constant. For tape expressions no node is recorded.
    fn constant(v: f64) -> Self;

    /// The numeric value carried by this scalar.
    fn value(self) -> f64;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, n: i32) -> Self;

    /// Logistic gate `1 / (1 + exp(-delta * x))`.
    fn sigmoid(self, delta: f64) -> Self;

    /// Identity inside `[lo, hi]`, the nearest bound (with zero derivative)
    /// outside.
    fn clamp_to(self, lo: f64, hi: f64) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn square(self) -> Self {
        self * self
    }

    fn sum_all(xs: &[Self]) -> Self {
        xs.iter().fold(Self::zero(), |a, &b| a + b)
    }
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn sigmoid(self, delta: f64) -> Self {
        logistic(delta * self)
    }
    #[inline]
    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        self.clamp(lo, hi)
    }
}
