//! Propensity-score weighted modified power priors (ProPP) for augmenting a
//! single-arm trial's response rate with external patient data.
//!
//! The analysis has two stages:
//!
//! 1. [`propensity`]: estimate each patient's probability of belonging to
//!    the trial and turn it into a weight; with the default scheme trial
//!    patients get weight 1 and external patients `min(1, λ/(1−λ))`.
//! 2. [`borrowing`]: raise each external patient's Bernoulli likelihood to
//!    `δ · wᵢ` and infer the response rate θ jointly with the power δ.
//!
//! [`simulation`] reproduces the operating-characteristics study comparing
//! this with ignoring or pooling the external data, the modified power prior
//! and a stratified fixed-budget method. [`demo`] provides a synthetic
//! cohort to run the whole pipeline end to end.
//!
//! ```
//! use propp::borrowing::{fit_ignore, fit_pooled};
//! use propp::model::Dataset;
//!
//! let data = Dataset::from_counts(75, 132, 129, 241).unwrap();
//! let trial_only = fit_ignore(&data).unwrap();
//! assert!((trial_only.mean - 76.0 / 134.0).abs() < 1e-12);
//! assert!(fit_pooled(&data).unwrap().width() < trial_only.width());
//! ```

pub mod analysis;
pub mod borrowing;
pub mod cli;
pub mod demo;
pub mod error;
pub mod io;
pub mod model;
pub mod propensity;
pub mod seed;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
