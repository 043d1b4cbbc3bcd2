//! Entropy-based adaptive design of Gaussian-process surrogates for failure
//! contours, and multifidelity importance sampling of small failure
//! probabilities.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod benchmarks;
pub mod domain;
pub mod error;
pub mod gp;
pub mod limit;
pub mod linalg;
pub mod mfis;
pub mod normal;
pub mod optimize;
pub mod rng;
pub mod sampling;
mod scalar;

pub use domain::Bounds;
pub use error::{Error, Result};
pub use limit::{Direction, LimitState};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Dataset64 = gp::Dataset<f64>;
pub type GpModel64 = gp::GpModel<f64>;
pub type KernelSpec64 = gp::KernelSpec<f64>;
pub type InputDistribution64 = sampling::InputDistribution<f64>;
pub type LimitState64 = LimitState<f64>;
pub type Bounds64 = Bounds<f64>;

pub type GpModel32 = gp::GpModel<f32>;
pub type Dataset32 = gp::Dataset<f32>;

pub type Designer64 = acquisition::Designer<f64>;
pub type BiasDistribution64 = mfis::BiasDistribution<f64>;
pub type BenchmarkSpec64 = benchmarks::BenchmarkSpec<f64>;
pub type LabeledTestSet64 = benchmarks::LabeledTestSet<f64>;
