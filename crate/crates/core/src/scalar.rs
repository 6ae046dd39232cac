//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type a circuit is parameterized over: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Shorthand for `T::from_f64(x).unwrap()`; every `f64` literal we use fits both widths.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + LowerExp
        + FromStr
        + Default
        + Sum
        + Send
        + Sync
        + 'static
{
}

/// Log-sum-exp over a slice; `-inf` operands contribute nothing.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || !max.is_finite() {
        return max;
    }
    let sum: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `log((1/n) * sum(exp(xs)))`.
pub fn log_mean_exp<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::neg_infinity();
    }
    log_sum_exp(xs) - T::from_count(xs.len()).ln()
}

/// Softmax of `logits` written into `probs` and `log_probs`.
pub(crate) fn softmax_into<T: Real>(logits: &[T], probs: &mut [T], log_probs: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = (l - max).exp();
        total = total + *p;
    }
    let log_total = total.ln();
    for ((p, lp), &l) in probs.iter_mut().zip(log_probs.iter_mut()).zip(logits) {
        *p = *p / total;
        *lp = l - max - log_total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_ignores_neg_infinity() {
        let xs = [f64::NEG_INFINITY, 1.0, f64::NEG_INFINITY];
        assert_eq!(log_sum_exp(&xs), 1.0);
        assert_eq!(log_sum_exp::<f64>(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn lse_is_stable_for_large_magnitudes() {
        let v = log_sum_exp(&[-1000.0_f64, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = log_sum_exp(&[800.0_f32, 800.0]);
        assert!((w - (800.0 + 2f32.ln())).abs() < 1e-3);
    }

    #[test]
    fn softmax_rows_normalize() {
        let logits = [0.3, -2.0, 5.0, 1.0];
        let mut p = [0.0; 4];
        let mut lp = [0.0; 4];
        softmax_into(&logits, &mut p, &mut lp);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for (a, b) in p.iter().zip(&lp) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
    }
}
