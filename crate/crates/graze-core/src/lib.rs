//! Core library for seasonal grazing detection on satellite image time
//! series: numeric kernels with exact gradients, dataset preparation and
//! synthesis, the recurrent-convolutional classifier, training, evaluation,
//! and monitoring-plan arithmetic.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod parallel;
pub mod planner;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
