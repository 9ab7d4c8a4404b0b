//! Simulation and analysis toolkit for real-time phase calibration of
//! multi-chain transmit arrays.
//!
//! The crate is organised bottom-up:
//!
//! - [`oscillator`] generates jitter processes for free-running VCOs, PLLs
//!   (exact discrete loop) and the white-noise PLL approximation.
//! - [`sigchain`] builds the TDMA synchronization frame seen by the reference
//!   chain and estimates per-chain phases from it.
//! - [`calib`] runs the closed calibration loop over many observation
//!   intervals and records residual phase errors.
//! - [`metrics`] holds jitter, beamforming and distribution statistics.
//! - [`scenario`], [`sweep`], [`ingest`] and [`emit`] orchestrate experiments
//!   and move data in and out of files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod emit;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod oscillator;
pub mod rng;
pub mod scenario;
pub mod sigchain;
pub mod sweep;

pub use error::{Error, Result};

#[cfg(test)]
mod oracles;

/// Wrap an angle to (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
