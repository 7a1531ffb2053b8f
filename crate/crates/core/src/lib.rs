//! Spectrum-sensing testbed.
//!
//! A complex-baseband simulator for a multi-tone primary system with
//! uncertain carrier phase, symbol timing and carrier-frequency offset,
//! a small dense neural-network engine used as a learned detector, an
//! energy-detection baseline, and an evaluation harness that sweeps
//! detection probability at a fixed false-alarm rate.
//!
//! Time is normalized to the symbol period (`T_sym = 1`). Frequency offsets
//! are expressed in units of the signal bandwidth `W = 1 + rolloff`.

pub mod baseband;
pub mod config;
pub mod dataset;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod mlp;
pub mod rng;
pub mod workspace;

mod binio;

pub use error::{Error, Result};
