//! Bayesian distributed lag models whose B-spline lag curve is smoothed by an
//! adaptive ICAR prior, with the usual comparison models and a simulation
//! harness.
//!
//! ```
//! use adaptive_dlm::models::{fit, ModelId, ModelOptions, ModelSpec, PenaltyAssignment};
//! use adaptive_dlm::sampler::ChainConfig;
//! use adaptive_dlm::simulate::{replicate_data, Scenario, SimConfig};
//!
//! let (x, y) = replicate_data(Scenario::DelayedPeak, 0, &SimConfig::default());
//! let m3 = ModelSpec::new(ModelId::M3, PenaltyAssignment::PenaltyList);
//! let chain = ChainConfig { n_iter: 1000, burn_in: 300, ..ChainConfig::default() };
//! let f = fit(&m3, &x, &y, 50, &chain, &ModelOptions::default()).unwrap();
//! assert_eq!(f.summary.beta_mean.len(), 51);
//! ```
//!
//! Modules, in pipeline order: [`basis`], [`penalty`], [`numerics`],
//! [`sampler`], [`models`], [`simulate`], [`report`].

pub mod basis;
pub mod error;
pub mod numerics;
pub mod penalty;
pub mod sampler;
pub mod models;
pub mod simulate;
pub mod report;
