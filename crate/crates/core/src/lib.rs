//! Uncertainty quantification for high-dimensional probit classification.
//!
//! The crate covers the synthetic probit teacher-student model, Bayes-optimal
//! GAMP, regularized logistic regression, the asymptotic state-evolution
//! equations, and closed-form joint densities and calibration curves derived
//! from them. Every numerical routine is generic over [`Scalar`] (`f32` or
//! `f64`); the `*64` aliases below fix the double-precision instantiation used
//! by the CLI.

// Quadrature and series constants are written at full published precision,
// `!(x > 0.0)` comparisons are what rejects NaN parameters, and index loops
// follow the component-wise update formulas.
#![allow(
    clippy::excessive_precision,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop
)]

pub mod crossval;
pub mod erm;
pub mod error;
pub mod gamp;
pub mod linalg;
pub mod montecarlo;
pub mod probit_model;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod state_evolution;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParams64 = probit_model::ModelParams<f64>;
pub type Dataset64 = probit_model::Dataset<f64>;
pub type GampResult64 = gamp::GampResult<f64>;
pub type ErmSolution64 = erm::ErmSolution<f64>;
pub type Overlaps64 = state_evolution::Overlaps<f64>;
pub type ErmFixedPoint64 = state_evolution::ErmFixedPoint<f64>;
pub type JointGaussianSpec64 = uncertainty::JointGaussianSpec<f64>;
pub type CalibrationCurve64 = uncertainty::CalibrationCurve<f64>;
pub type LambdaSweep64 = crossval::LambdaSweep<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
