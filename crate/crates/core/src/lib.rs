//! Regression under categorical labels with aleatoric label-uncertainty
//! modelling.
//!
//! The library trains small heteroscedastic models against interval-valued
//! categorical labels. Its centerpiece turns a (mean, scale) estimate into
//! exact per-category probabilities through CDF differences over the
//! category bounds with unit-sum normalization, alongside the
//! density-at-center approximation it improves on, dual-label soft and
//! stochastic target losses, a mixture head, calibration and significance
//! metrics, and a synthetic intra-observer-variability testbed for method
//! comparisons.
//!
//! Modules, roughly bottom-up:
//!
//! - [`rng`]: seeded deterministic random streams
//! - [`dist`]: error function and the Gaussian/Laplace error models
//! - [`scheme`]: ordered quality categories with numeric bounds
//! - [`interval`]: per-category probabilities and their analytic gradients
//! - [`losses`]: heteroscedastic NLL, dual-label cross-entropy, AGT/SGT
//! - [`model`]: feedforward trunk with per-method heads, backprop, Adam
//! - [`synth`]: synthetic worlds, label sampling, scenarios, calibration
//! - [`eval`]: relaxed accuracy, error stats, ECE/MCE, Welch t-test
//! - [`experiments`]: scenario x method runs, ensembles, active learning

pub mod dist;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod interval;
pub mod losses;
pub mod model;
pub mod rng;
pub mod scheme;
pub mod synth;

pub use error::{Error, Result};
