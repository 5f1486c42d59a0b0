//! Split conformal prediction with bounds on the expected prediction-set size.
//!
//! The score, calibration, c.d.f. and bound code is generic over a
//! [`Scalar`] (`f32` or `f64`); learners and data handling use `f64`.
//! Aliases for the `f64` instantiations are provided below.

// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod calibration;
pub mod cdf_models;
pub mod dataio;
pub mod error;
pub mod learners;
pub mod quadrature;
pub mod scalar;
pub mod scores;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type LabelSpace64 = scores::LabelSpace<f64>;
pub type Target64 = scores::Target<f64>;
pub type ScoreSpec64 = scores::ScoreSpec<f64>;
pub type GammaDensity64 = scores::GammaDensity<f64>;
pub type CalibrationSet64 = calibration::CalibrationSet<f64>;
pub type Quantile64 = calibration::Quantile<f64>;
pub type PredictionSet64 = calibration::PredictionSet<f64>;
pub type CoverageEstimate64 = calibration::CoverageEstimate<f64>;
pub type CdfEstimate64 = cdf_models::CdfEstimate<f64>;
pub type SlackSpec64 = bounds::SlackSpec<f64>;
pub type SlackMode64 = bounds::SlackMode<f64>;
pub type BoundQuery64 = bounds::BoundQuery<f64>;
pub type BoundResult64 = bounds::BoundResult<f64>;
