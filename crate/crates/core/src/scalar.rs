//! Scalar abstraction: the whole engine is generic over the floating-point
//! type used for features, responses and criterion arithmetic.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + Sum<Self>
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64`, rounding to the nearest representable value.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Scalar")
    }

    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count converts to any Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cascade (pairwise) summation; bounds rounding drift versus a running sum.
pub fn pairwise_sum<S: Scalar>(values: &[S]) -> S {
    if values.len() <= 32 {
        let mut acc = S::zero();
        for &v in values {
            acc += v;
        }
        acc
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Mean via pairwise summation; zero on an empty slice.
pub fn pairwise_mean<S: Scalar>(values: &[S]) -> S {
    if values.is_empty() {
        S::zero()
    } else {
        pairwise_sum(values) / S::from_count(values.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 55.0);
    }

    #[test]
    fn pairwise_sum_recurses_past_chunk_boundary() {
        let xs = vec![0.125f64; 1000];
        assert_eq!(pairwise_sum(&xs), 125.0);
    }

    #[test]
    fn mean_of_empty_is_zero() {
        assert_eq!(pairwise_mean::<f64>(&[]), 0.0);
    }
}
