//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the toolkit computes in: `f64` for analysis, `f32` when
/// working directly on stored embeddings.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Finite literals always fit both supported widths.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Neumaier-compensated sum. Used for every mean in the crate so that large
/// pools accumulate without order-dependent drift.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub fn mean<T: Scalar>(values: &[T]) -> T {
    compensated_sum(values.iter().copied()) / T::from_usize_lossy(values.len())
}

/// Unbiased (n − 1) sample variance.
pub fn sample_variance<T: Scalar>(values: &[T]) -> T {
    let m = mean(values);
    compensated_sum(values.iter().map(|&v| (v - m) * (v - m)))
        / T::from_usize_lossy(values.len() - 1)
}

/// Population (n) standard deviation, the multi-seed aggregation convention.
pub fn population_std<T: Scalar>(values: &[T]) -> T {
    let m = mean(values);
    (compensated_sum(values.iter().map(|&v| (v - m) * (v - m))) / T::from_usize_lossy(values.len()))
        .sqrt()
}
