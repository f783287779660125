//! Minimum-power operating points for small-cell networks whose base stations
//! are fed by a multi-antenna gateway over a dirty-paper-coded MISO broadcast
//! backhaul.
//!
//! The joint problem decouples into two independent pieces once the backhaul
//! rates are pinned to the per-cell sums of the user requirements:
//!
//! * [`access`] solves the interference-coupled access power control as a
//!   linear system (SINR constraints are tight at the optimum).
//! * [`backhaul`] computes dual uplink powers by a backward sweep and maps them
//!   to downlink DPC precoders through the uplink-downlink covariance
//!   transformation. A zero-forcing baseline is included for comparison.
//!
//! [`jppc`] ties both together for one channel draw and [`experiments`] runs
//! seeded Monte Carlo sweeps over the backhaul distance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod access;
pub mod backhaul;
pub mod config;
mod error;
pub mod experiments;
pub mod jppc;
pub mod numerics;
pub mod oracle;
pub mod scenario;
pub mod selftest;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Complex column vector used for channels and precoders.
pub type CVector = nalgebra::DVector<Complex64>;
