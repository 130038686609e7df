//! Measurement and calibration mathematics: spectral estimation and the
//! loss budget, plus the fitting routines used on scans and error signals.

pub mod calibration;
pub mod interferometer;
pub mod lm;
pub mod loss;
pub mod peaks;
pub mod scan_fit;
pub mod spectral;
