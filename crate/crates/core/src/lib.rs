//! Channel-randomized orthogonal blinding.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! pieces of the scheme:
//!
//! * [`channel`] synthesizes multipath environments and reconfigurable-antenna
//!   gain patterns and evaluates mode-dependent CSI.
//! * [`blinding`] builds the orthogonal-blinding transmit filter, injects
//!   artificial noise and implements the 4-QAM modem.
//! * [`attacker`] is the NLMS known-plaintext eavesdropper.
//! * [`aod`] recovers sparse angle-of-departure distributions from a handful
//!   of training modes and predicts CSI for the remaining modes.
//! * [`protocol`] wires the training and secure-transmission phases together.
//! * [`secrecy`] estimates the secrecy leakage as an empirical conditional
//!   mutual information.
//!
//! File formats, configuration and the command-line harness live in the
//! `robin-sim` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod aod;
pub mod attacker;
pub mod blinding;
pub mod channel;
mod error;
pub mod linalg;
pub mod protocol;
pub mod rng;
pub mod secrecy;

pub use crate::error::{Error, Result};
pub use crate::linalg::{CMatrix, C64};
