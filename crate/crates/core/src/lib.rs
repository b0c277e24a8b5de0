//! Zone-level occupancy counting from passively sniffed WiFi probe requests.
//!
//! Probe logs are windowed per device and sniffer, held across short gaps,
//! localized with an estimator chosen by how many sniffers heard the device,
//! smoothed by an interacting multiple-model Kalman tracker and finally
//! mapped to zones to produce occupancy counts and dwell times.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deployment;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod localization;
pub mod measurement;
pub mod occupancy;
pub mod pipeline;
pub mod scenario;
pub mod simulator;
pub mod tracking;

pub use error::{Error, Result};
