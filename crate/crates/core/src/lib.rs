//! Exact GMM estimation for models with indicator (nonsmooth) moments, and
//! the Monte Carlo machinery to measure how estimator variance decays with
//! sample size under correct and incorrect specification.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the simulation harness uses.

// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod exact;
pub mod gmm;
pub mod linalg;
pub mod mc;
pub mod moments;
pub mod population;
pub mod rates;
pub mod sampling;
pub mod scalar;

pub use data::Dataset;
pub use error::{Error, Result};
pub use gmm::{
    build_weight, criterion, fit_one_step, fit_two_step, CellDescriptor, GmmFit, ParamBox, WeightKind, WeightMatrix,
    WeightScheme,
};
pub use moments::{MomentFamily, MomentSpec, QuadratureRule};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type GmmFit64 = GmmFit<f64>;
pub type GmmFit32 = GmmFit<f32>;
pub type WeightMatrix64 = WeightMatrix<f64>;
pub type ParamBox64 = ParamBox<f64>;
