//! Digital servo: PID controller, lock-acquisition state machine,
//! closed-loop engine, analytic loop model and in-loop Bode analyzer.
//!
//! Sign convention: a positive length offset gives a positive PDH error,
//! and the controller output is u = −PID(ε), so with a positive piezo gain
//! the loop gain L = K_d · g_p · H(f) · C(f) is positive at DC and the
//! residual length is S = 1/(1 + L) times the disturbance.

mod bode;
mod engine;
mod model;
mod pid;

pub use bode::{bode_measure, log_spaced, to_csv as bode_csv, BodeOptions, BodePoint};
pub use engine::{
    run_closed_loop, Engine, LockReport, LockRun, LockTraces, LoopState, RunOptions, StepRecord,
    RESIDUAL_BAND_HZ,
};
pub use model::LoopModel;
pub use pid::Pid;

use serde::{Deserialize, Serialize};

use crate::cavity::CavityConfig;
use crate::error::{ensure_finite, Error, Result};
use crate::pdh::{PdhConfig, PdhModel};
use crate::plant::PlantConfig;

/// Triangle wave applied to the piezo while searching for resonance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRampConfig {
    /// Peak voltage; the ramp spans ±amplitude.
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoConfig {
    pub sample_rate_fs: f64,
    /// Proportional gain, V/V.
    pub kp: f64,
    /// Integral gain, V/(V·s).
    pub ki: f64,
    /// Derivative gain, V·s/V.
    pub kd: f64,
    /// [min, max] controller output, volts.
    pub output_limits: [f64; 2],
    /// Bound on |integrator state|, volts.
    pub integrator_clamp: f64,
    /// Normalized transmission that triggers engagement.
    pub lock_engage_threshold: f64,
    /// Normalized transmission below which the lock is considered lost.
    pub unlock_threshold: f64,
    pub scan_ramp: ScanRampConfig,
    /// Consecutive samples above the engage threshold before LOCKED.
    pub lock_confirm_samples: u32,
    /// Consecutive samples below the unlock threshold before relocking.
    pub unlock_debounce_samples: u32,
}

/// Proportional loop gain of the tuned preset (dimensionless, at DC).
pub const TUNED_LOOP_PROPORTIONAL: f64 = 0.2;
/// Frequency where the tuned preset's integral term alone reaches unity loop gain.
pub const TUNED_INTEGRATOR_UNITY_HZ: f64 = 70e3;

impl ServoConfig {
    /// Zero-gain configuration: the loop stays open and the cavity free-runs.
    pub fn open_loop() -> Self {
        Self {
            sample_rate_fs: 1e6,
            kp: 0.0,
            ki: 0.0,
            kd: 0.0,
            output_limits: [-75.0, 75.0],
            integrator_clamp: 75.0,
            lock_engage_threshold: 0.5,
            unlock_threshold: 0.2,
            scan_ramp: ScanRampConfig { amplitude: 25.0, frequency: 10.0 },
            lock_confirm_samples: 1000,
            unlock_debounce_samples: 100,
        }
    }

    /// PI gains scaled to the discriminant slope and piezo gain so that the
    /// loop gain is `TUNED_LOOP_PROPORTIONAL` + `TUNED_INTEGRATOR_UNITY_HZ`/(i f).
    pub fn tuned(cavity: &CavityConfig, pdh: &PdhConfig, plant: &PlantConfig) -> Result<Self> {
        plant.validate()?;
        let k_d = PdhModel::new(cavity, pdh)?.slope_per_meter();
        let scale = k_d * plant.piezo_gain;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidConfig(
                "discriminant slope must be positive to tune the loop".into(),
            ));
        }
        Ok(Self {
            kp: TUNED_LOOP_PROPORTIONAL / scale,
            ki: std::f64::consts::TAU * TUNED_INTEGRATOR_UNITY_HZ / scale,
            output_limits: plant.voltage_range,
            integrator_clamp: plant.voltage_range[0].abs().max(plant.voltage_range[1].abs()),
            ..Self::open_loop()
        })
    }

    /// `tuned` or `open-loop`.
    pub fn preset(name: &str, cavity: &CavityConfig, pdh: &PdhConfig, plant: &PlantConfig) -> Result<Self> {
        match name {
            "tuned" => Self::tuned(cavity, pdh, plant),
            "open-loop" | "off" => Ok(Self::open_loop()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn is_open_loop(&self) -> bool {
        self.kp == 0.0 && self.ki == 0.0 && self.kd == 0.0
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_fs
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sample_rate_fs", self.sample_rate_fs),
            ("kp", self.kp),
            ("ki", self.ki),
            ("kd", self.kd),
            ("output_limits", self.output_limits[0]),
            ("output_limits", self.output_limits[1]),
            ("integrator_clamp", self.integrator_clamp),
            ("lock_engage_threshold", self.lock_engage_threshold),
            ("unlock_threshold", self.unlock_threshold),
            ("scan_ramp.amplitude", self.scan_ramp.amplitude),
            ("scan_ramp.frequency", self.scan_ramp.frequency),
        ] {
            ensure_finite(name, v)?;
        }
        if self.sample_rate_fs <= 0.0 {
            return Err(Error::InvalidConfig("sample_rate_fs must be positive".into()));
        }
        if !(self.output_limits[0] < self.output_limits[1]) {
            return Err(Error::InvalidConfig("output_limits must be [min, max] with min < max".into()));
        }
        if self.integrator_clamp < 0.0 {
            return Err(Error::InvalidConfig("integrator_clamp must be non-negative".into()));
        }
        let (e, u) = (self.lock_engage_threshold, self.unlock_threshold);
        if !(e > 0.0 && e < 1.0 && u > 0.0 && u < 1.0) {
            return Err(Error::InvalidConfig("thresholds must lie in (0, 1)".into()));
        }
        if e <= u {
            return Err(Error::InvalidConfig(
                "lock_engage_threshold must exceed unlock_threshold".into(),
            ));
        }
        if self.scan_ramp.amplitude < 0.0 || self.scan_ramp.frequency <= 0.0 {
            return Err(Error::InvalidConfig("scan ramp needs amplitude >= 0 and frequency > 0".into()));
        }
        if self.unlock_debounce_samples == 0 {
            return Err(Error::InvalidConfig("unlock_debounce_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything the closed loop needs apart from the disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSetup {
    pub cavity: CavityConfig,
    pub pdh: PdhConfig,
    pub plant: PlantConfig,
    pub servo: ServoConfig,
}

impl LoopSetup {
    /// Cavity and plant presets of the same name with default modulation
    /// and the tuned servo.
    pub fn tuned(cavity: CavityConfig, plant: PlantConfig) -> Result<Self> {
        let pdh = PdhConfig::default();
        let servo = ServoConfig::tuned(&cavity, &pdh, &plant)?;
        Ok(Self { cavity, pdh, plant, servo })
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        self.pdh.validate()?;
        self.plant.validate()?;
        self.servo.validate()
    }

    /// Total controller-to-length delay in samples (at least one).
    pub fn delay_samples(&self) -> usize {
        ((self.plant.loop_delay * self.servo.sample_rate_fs).round() as usize).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuned_gains_scale_with_slope() {
        let b = ServoConfig::tuned(&CavityConfig::bare(), &PdhConfig::default(), &PlantConfig::bare()).unwrap();
        let d = ServoConfig::tuned(&CavityConfig::diamond(), &PdhConfig::default(), &PlantConfig::diamond()).unwrap();
        assert!(d.kp > b.kp);
        assert!((b.ki / b.kp - d.ki / d.kp).abs() < 1e-6 * b.ki / b.kp);
        b.validate().unwrap();
        assert!(!b.is_open_loop());
        assert!(ServoConfig::open_loop().is_open_loop());
    }

    #[test]
    fn threshold_ordering_enforced() {
        let mut s = ServoConfig::open_loop();
        s.unlock_threshold = 0.6;
        assert!(s.validate().is_err());
        let mut s = ServoConfig::open_loop();
        s.lock_engage_threshold = 1.0;
        assert!(s.validate().is_err());
        let mut s = ServoConfig::open_loop();
        s.sample_rate_fs = 0.0;
        assert!(s.validate().is_err());
    }
}
