//! e-BH with conditional calibration.
//!
//! The crate boosts e-values by calibrating each one against its conditional
//! null law given a sufficient statistic, and ships three instantiations
//! (parametric z/t tests, derandomized model-X knockoffs, weighted conformal
//! outlier detection) plus a seeded simulation harness.

pub mod calibration;
pub mod confidence;
pub mod conformal;
pub mod error;
pub mod evalue;
pub mod harness;
pub mod knockoffs;
pub mod linalg;
pub mod parametric;
pub mod rng;

pub use error::{Error, Result};
pub use evalue::{bh, ebh, metrics, EValueVector, GroundTruth, PValueVector, RejectionSet};
