//! Analytic small-signal model of the closed loop, built from the plant
//! transfer function, the PID z-transform and the discriminant slope.

use num_complex::Complex64;

use super::{LoopSetup, Pid};
use crate::error::Result;
use crate::pdh::PdhModel;
use crate::plant::{transfer_function, PlantConfig};

#[derive(Debug, Clone)]
pub struct LoopModel {
    /// Discriminant slope dε/dL at resonance, V/m.
    pub discriminant_slope: f64,
    plant: PlantConfig,
    pid: Pid,
}

impl LoopModel {
    pub fn new(setup: &LoopSetup) -> Result<Self> {
        setup.validate()?;
        let discriminant_slope = PdhModel::new(&setup.cavity, &setup.pdh)?.slope_per_meter();
        let s = &setup.servo;
        let mut plant = setup.plant.clone();
        // The engine realizes the delay in whole samples.
        plant.loop_delay = setup.delay_samples() as f64 / s.sample_rate_fs;
        Ok(Self {
            discriminant_slope,
            plant,
            pid: Pid::new(s.kp, s.ki, s.kd, s.dt(), f64::INFINITY, [f64::NEG_INFINITY, f64::INFINITY]),
        })
    }

    /// Length per volt of drive, including modes and delay, m/V.
    pub fn actuator(&self, f: f64) -> Complex64 {
        self.plant.piezo_gain * transfer_function(&self.plant, f)
    }

    pub fn controller(&self, f: f64) -> Complex64 {
        self.pid.response(f)
    }

    /// Open-loop gain L(f).
    pub fn loop_gain(&self, f: f64) -> Complex64 {
        self.discriminant_slope * self.actuator(f) * self.controller(f)
    }

    /// Disturbance-to-residual transfer S = 1/(1 + L).
    pub fn sensitivity(&self, f: f64) -> Complex64 {
        1.0 / (1.0 + self.loop_gain(f))
    }

    /// Error-signal response to a voltage injected at the piezo input, V/V.
    pub fn injection_response(&self, f: f64) -> Complex64 {
        self.discriminant_slope * self.actuator(f) * self.sensitivity(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::CavityConfig;
    use crate::servo::{TUNED_INTEGRATOR_UNITY_HZ, TUNED_LOOP_PROPORTIONAL};

    #[test]
    fn tuned_loop_has_designed_shape() {
        let setup = LoopSetup::tuned(CavityConfig::bare(), PlantConfig::rigid()).unwrap();
        let m = LoopModel::new(&setup).unwrap();
        // Well below the integrator corner, |L| ≈ f_i / f.
        let l = m.loop_gain(10.0);
        assert!((l.norm() / (TUNED_INTEGRATOR_UNITY_HZ / 10.0) - 1.0).abs() < 1e-3);
        assert!((l.arg().to_degrees() + 90.0).abs() < 1.0);
        // At Nyquist z⁻¹ = −1 and the PI reduces to kp + ki·dt/2.
        let c = m.controller(5e5) * m.discriminant_slope * m.actuator(0.0);
        let expected = TUNED_LOOP_PROPORTIONAL + std::f64::consts::PI * TUNED_INTEGRATOR_UNITY_HZ * 1e-6;
        assert!((c - expected).norm() < 1e-9);
        // ≥ 40 dB suppression at 10 Hz.
        assert!(20.0 * m.sensitivity(10.0).norm().log10() < -40.0);
    }

    #[test]
    fn injection_response_is_slope_times_actuator_times_s() {
        let setup = LoopSetup::tuned(CavityConfig::diamond(), PlantConfig::diamond()).unwrap();
        let m = LoopModel::new(&setup).unwrap();
        for f in [100.0, 6e3, 20e3] {
            let a = m.injection_response(f);
            let b = m.discriminant_slope * m.actuator(f) / (1.0 + m.loop_gain(f));
            assert!((a - b).norm() < 1e-12 * a.norm());
        }
    }
}
