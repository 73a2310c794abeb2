//! Linear precoder/decoder design for a bidirectional full-duplex MIMO-OFDM
//! link under limited transceiver dynamic range and norm-bounded CSI error.
//!
//! The crate is organized bottom-up:
//!
//! * [`config`], [`channel`], [`model`]: system parameters, seeded channel
//!   draws and the closed-form covariance / MSE / rate expressions.
//! * [`distortion`]: a time-domain simulation of the distorted transceiver
//!   chains, used to validate the frequency-domain covariance model.
//! * [`altqcp`], [`wmmse`]: alternating weighted-MSE minimization and
//!   weighted sum-rate maximization.
//! * [`robust`]: worst-case CSI errors and a cutting-set robust design.
//! * [`baselines`]: distortion-blind and half-duplex comparison designs.
//! * [`harness`]: Monte Carlo sweeps, CSV output and plot tables.

pub mod altqcp;
pub mod baselines;
pub mod channel;
pub mod config;
pub mod distortion;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod robust;
pub mod wmmse;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
