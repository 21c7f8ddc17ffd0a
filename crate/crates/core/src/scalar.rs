//! Scalar abstraction shared by every table in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the tabular algorithms run on: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log Σ exp(x_i)` with max-subtraction. Empty or all-`-inf` input gives `-inf`.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let m = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if m == S::neg_infinity() {
        return m;
    }
    if m == S::infinity() {
        return m;
    }
    let s: S = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// `log(exp a + exp b)`.
pub fn log_add_exp<S: Scalar>(a: S, b: S) -> S {
    let m = a.max(b);
    if m == S::neg_infinity() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Softmax of `xs`, written into a fresh vector.
pub fn softmax<S: Scalar>(xs: &[S]) -> Vec<S> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

pub(crate) fn max_abs<S: Scalar>(xs: impl IntoIterator<Item = S>) -> S {
    xs.into_iter().fold(S::zero(), |m, x| m.max(x.abs()))
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `x log x` with the `0 log 0 = 0` convention.
pub(crate) fn xlogx<S: Scalar>(x: S) -> S {
    if x <= S::zero() {
        S::zero()
    } else {
        x * x.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive_and_survives_large_inputs() {
        let xs = [0.3f64, -1.2, 2.5];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-14);

        let big = [1000.0f64, 1000.0];
        assert!((log_sum_exp(&big) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn log_add_exp_handles_neg_infinity() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_add_exp(0.0f32, 0.0) - 2f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&[1.0f64, 0.0]);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
