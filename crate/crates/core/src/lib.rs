//! Gaussian-mixture trajectory PHD filter for joint multi-target tracking and
//! classification (GM-JTC-TPHD).
//!
//! Every target class carries its own jump-Markov bank of motion models. The
//! filter propagates a Gaussian mixture over sets of *trajectories* (birth
//! time plus a whole state sequence) on a state space augmented with the class
//! label, so the update smooths past states and refines class probabilities
//! at the same time.
//!
//! Layout:
//! - [`models`]: motion, sensor and clutter models plus the class registry.
//! - [`trajectory`]: trajectory Gaussians, mixture components and birth.
//! - [`filter`]: predict / update / reduce / L-scan / extraction.
//! - [`simulator`]: ground truth, measurement frames and Monte Carlo runs.
//! - [`metrics`]: trajectory metric, cardinality and classification scores.
//! - [`config`]: the JSON experiment document that ties it all together.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod config;
pub mod error;
pub mod filter;
pub mod metrics;
pub mod models;
pub mod seed;
pub mod simulator;
pub mod trajectory;

pub use error::{Error, Result};
