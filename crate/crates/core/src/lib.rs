//! Simulation and analysis toolkit for a Fabry-Perot cavity held on
//! resonance with a laser by Pound-Drever-Hall feedback.
//!
//! The crate is organized bottom-up:
//!
//! - [`cavity`]: static optical model (FSR, finesse, waist, field response).
//! - [`pdh`]: phase-modulation sidebands, error signal, synthetic scans.
//! - [`vibration`]: parameterized displacement spectra and seeded synthesis.
//! - [`plant`]: piezo actuator with mechanical resonances.
//! - [`servo`]: digital PID, lock state machine, closed-loop engine, Bode analyzer.
//! - [`analysis`]: fits, calibrations, spectral estimation and loss budgets.
//! - [`scenario`]: named preset bundles run end to end.
//!
//! Every stochastic path is driven by [`rng::SeededRng`], so identical seeds
//! and parameters give bit-identical output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cavity;
pub mod error;
pub mod io;
pub mod pdh;
pub mod plant;
pub mod rng;
pub mod scenario;
pub mod servo;
pub mod special;
pub mod trace;
pub mod vibration;

pub use error::{Error, Result};
pub use trace::Trace;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Producer tag written into every output file.
pub const CREATED_BY: &str = concat!("cryolock ", env!("CARGO_PKG_VERSION"));
