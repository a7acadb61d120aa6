//! Physics-informed anomaly detection for autonomous-vehicle perception attacks.
//!
//! The crate models normal lateral behaviour with a dynamic bicycle model,
//! turns telemetry into physics-residual features, trains binary classifiers
//! and applies a thresholded detector whose operating margin can be tuned
//! against false-positive and false-negative rates. A closed-loop simulator
//! with a depth-camera blinding injector produces labelled data for testing
//! the whole pipeline.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod cli;
pub mod config;
pub mod data;
pub mod detector;
pub mod dynamics;
pub mod error;
pub mod features;
pub mod manifest;
pub mod par;
pub mod simulate;

pub use error::{Error, Result};
