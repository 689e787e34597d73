//! Random forest regression that handles missing feature values natively:
//! at every split, the members whose coordinate is missing in the cut
//! direction are assigned to a child jointly with the cut itself, maximizing
//! the variance-reduction criterion, and each missing coordinate keeps a
//! shrinking interval imputation instead of a point value.
//!
//! The crate also ships the classic comparison strategies (median fill,
//! missing-together splits, proximity-weighted iterative imputation, its
//! k-nearest-neighbor variant and column-wise forest imputation) plus a
//! benchmark harness that corrupts synthetic data completely at random and
//! scores every strategy against the noiseless target.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below are the defaults used by the command-line tools.

pub mod baselines;
pub mod bench;
pub mod data;
pub mod error;
pub mod forest;
pub mod scalar;
pub mod split;
pub mod tree;

mod seeding;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset64 = data::Dataset<f64>;
pub type Forest64 = forest::Forest<f64>;
pub type TreeNode64 = tree::TreeNode<f64>;
pub type BenchmarkResult64 = bench::BenchmarkResult<f64>;

pub type Dataset32 = data::Dataset<f32>;
pub type Forest32 = forest::Forest<f32>;
pub type TreeNode32 = tree::TreeNode<f32>;
