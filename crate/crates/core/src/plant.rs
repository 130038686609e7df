//! Piezo actuator with mechanical resonances.
//!
//! The voltage-to-length response is a rigid term plus weighted
//! second-order modes, normalized to unity at DC and scaled by the piezo
//! gain:
//!
//! H(f) = (1 − Σw) + Σ w·f0² / (f0² − f² + i·f·f0/q),  times e^{−i2πf·τ}
//!
//! The discrete realization uses one bilinear biquad per mode (prewarped at
//! the mode frequency) and a whole-sample delay line for τ.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub f0: f64,
    pub quality_q: f64,
    pub modal_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Low-frequency actuation, metres per volt.
    pub piezo_gain: f64,
    /// [V_min, V_max].
    pub voltage_range: [f64; 2],
    pub modes: Vec<Mode>,
    /// Pure transport delay between controller output and actuation, s.
    pub loop_delay: f64,
}

const DEFAULT_Q: f64 = 50.0;

impl PlantConfig {
    /// Bare cavity: resonances near 6, 18 and 30 kHz.
    pub fn bare() -> Self {
        Self {
            piezo_gain: 10e-9,
            voltage_range: [-75.0, 75.0],
            modes: [6e3, 18e3, 30e3]
                .into_iter()
                .map(|f0| Mode { f0, quality_q: DEFAULT_Q, modal_weight: 0.02 })
                .collect(),
            loop_delay: 2e-6,
        }
    }

    /// Diamond cavity: a stronger 6 kHz mode and one near 12 kHz.
    pub fn diamond() -> Self {
        Self {
            modes: vec![
                Mode { f0: 6e3, quality_q: DEFAULT_Q, modal_weight: 0.05 },
                Mode { f0: 12e3, quality_q: DEFAULT_Q, modal_weight: 0.02 },
            ],
            ..Self::bare()
        }
    }

    /// No resonances: a rigid actuator with delay only.
    pub fn rigid() -> Self {
        Self { modes: Vec::new(), ..Self::bare() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "bare" => Ok(Self::bare()),
            "diamond" => Ok(Self::diamond()),
            "rigid" => Ok(Self::rigid()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("piezo_gain", self.piezo_gain)?;
        ensure_finite("loop_delay", self.loop_delay)?;
        ensure_finite("voltage_range", self.voltage_range[0])?;
        ensure_finite("voltage_range", self.voltage_range[1])?;
        if self.piezo_gain <= 0.0 {
            return Err(Error::InvalidConfig("piezo_gain must be positive".into()));
        }
        if self.loop_delay < 0.0 {
            return Err(Error::InvalidConfig("loop_delay must be non-negative".into()));
        }
        if !(self.voltage_range[0] < self.voltage_range[1]) {
            return Err(Error::InvalidConfig("voltage_range must be [min, max] with min < max".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            ensure_finite("mode f0", m.f0)?;
            ensure_finite("mode quality_q", m.quality_q)?;
            ensure_finite("mode modal_weight", m.modal_weight)?;
            if m.f0 <= 0.0 || m.quality_q <= 0.0 || m.modal_weight < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "mode {i}: need f0 > 0, q > 0, modal_weight >= 0"
                )));
            }
        }
        let total: f64 = self.modes.iter().map(|m| m.modal_weight).sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "modal weights sum to {total}, more than the unit DC response"
            )));
        }
        Ok(())
    }

    fn rigid_weight(&self) -> f64 {
        1.0 - self.modes.iter().map(|m| m.modal_weight).sum::<f64>()
    }

    /// Normalized response without the delay phasor.
    pub fn modal_response(&self, f: f64) -> Complex64 {
        let mut h = Complex64::new(self.rigid_weight(), 0.0);
        for m in &self.modes {
            let den = Complex64::new(m.f0 * m.f0 - f * f, f * m.f0 / m.quality_q);
            h += m.modal_weight * m.f0 * m.f0 / den;
        }
        h
    }
}

/// Normalized voltage-to-length response at `f` (H(0) = 1), including delay.
pub fn transfer_function(plant: &PlantConfig, f: f64) -> Complex64 {
    plant.modal_response(f) * Complex64::from_polar(1.0, -TAU * f * plant.loop_delay)
}

/// Normalized biquad coefficients [b0, b1, b2, a1, a2] (a0 = 1).
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn resonator(mode: &Mode, dt: f64) -> Self {
        let w0 = TAU * mode.f0;
        let k = w0 / (w0 * dt / 2.0).tan();
        let bw = k * w0 / mode.quality_q;
        let a0 = k * k + bw + w0 * w0;
        let g = mode.modal_weight * w0 * w0 / a0;
        Self {
            b: [g, 2.0 * g, g],
            a: [2.0 * (w0 * w0 - k * k) / a0, (k * k - bw + w0 * w0) / a0],
        }
    }
}

/// Plant discretized for a fixed step `dt`.
#[derive(Debug, Clone)]
pub struct Plant {
    pub config: PlantConfig,
    pub dt: f64,
    sections: Vec<Biquad>,
    rigid: f64,
    delay_samples: usize,
}

/// Mutable plant state: biquad registers and the delay line.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    registers: Vec<[f64; 2]>,
    delay_line: VecDeque<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantOutput {
    /// Cavity length offset: actuation plus disturbance, metres.
    pub length_offset: f64,
    /// Actuator contribution alone, metres.
    pub actuation: f64,
    /// Voltage actually applied after clamping.
    pub applied_voltage: f64,
    pub saturated: bool,
}

impl Plant {
    pub fn new(config: &PlantConfig, dt: f64) -> Result<Self> {
        config.validate()?;
        ensure_finite("dt", dt)?;
        if dt <= 0.0 {
            return Err(Error::arg("dt", "must be positive"));
        }
        for m in &config.modes {
            if m.f0 * dt >= 0.5 {
                return Err(Error::InvalidConfig(format!(
                    "mode at {} Hz is not below the Nyquist frequency {} Hz",
                    m.f0,
                    0.5 / dt
                )));
            }
        }
        Ok(Self {
            config: config.clone(),
            dt,
            sections: config.modes.iter().map(|m| Biquad::resonator(m, dt)).collect(),
            rigid: config.rigid_weight(),
            delay_samples: (config.loop_delay / dt).round() as usize,
        })
    }

    pub fn delay_samples(&self) -> usize {
        self.delay_samples
    }

    /// State at rest with zero drive.
    pub fn initial_state(&self) -> PlantState {
        PlantState {
            registers: vec![[0.0; 2]; self.sections.len()],
            delay_line: std::iter::repeat_n(0.0, self.delay_samples).collect(),
        }
    }

    /// State at equilibrium under a constant drive `voltage`.
    pub fn settled_state(&self, voltage: f64) -> PlantState {
        let v = self.clamp(voltage).0;
        let registers = self
            .sections
            .iter()
            .map(|s| {
                // DC gain of each section is its modal weight; steady-state
                // DF2T registers follow from y = x·Σb/(1+Σa).
                let y = v * (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
                [y - s.b[0] * v, s.b[2] * v - s.a[1] * y]
            })
            .collect();
        PlantState {
            registers,
            delay_line: std::iter::repeat_n(v, self.delay_samples).collect(),
        }
    }

    fn clamp(&self, v: f64) -> (f64, bool) {
        let [lo, hi] = self.config.voltage_range;
        if v < lo {
            (lo, true)
        } else if v > hi {
            (hi, true)
        } else {
            (v, false)
        }
    }

    /// Advances one sample: clamps and enqueues `control_voltage`, drives
    /// the modes with the delayed voltage, and adds `noise_displacement`.
    pub fn step(&self, state: &mut PlantState, control_voltage: f64, noise_displacement: f64) -> Result<PlantOutput> {
        ensure_finite("control_voltage", control_voltage)?;
        ensure_finite("noise_displacement", noise_displacement)?;
        Ok(self.step_unchecked(state, control_voltage, noise_displacement))
    }

    /// [`Plant::step`] without finiteness checks, for the inner loop.
    #[inline]
    pub fn step_unchecked(&self, state: &mut PlantState, control_voltage: f64, noise_displacement: f64) -> PlantOutput {
        let (v, saturated) = self.clamp(control_voltage);
        let x = if self.delay_samples == 0 {
            v
        } else {
            state.delay_line.push_back(v);
            state.delay_line.pop_front().unwrap_or(0.0)
        };
        let mut sum = self.rigid * x;
        for (s, r) in self.sections.iter().zip(state.registers.iter_mut()) {
            let y = s.b[0] * x + r[0];
            r[0] = s.b[1] * x - s.a[0] * y + r[1];
            r[1] = s.b[2] * x - s.a[1] * y;
            sum += y;
        }
        let actuation = self.config.piezo_gain * sum;
        PlantOutput {
            length_offset: actuation + noise_displacement,
            actuation,
            applied_voltage: v,
            saturated,
        }
    }

    /// Frequency response of the discrete realization, normalized to DC,
    /// at `f` (including the whole-sample delay).
    pub fn discrete_response(&self, f: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -TAU * f * self.dt);
        let mut h = Complex64::new(self.rigid, 0.0);
        for s in &self.sections {
            let num = s.b[0] + s.b[1] * z1 + s.b[2] * z1 * z1;
            let den = 1.0 + s.a[0] * z1 + s.a[1] * z1 * z1;
            h += num / den;
        }
        h * z1.powu(self.delay_samples as u32)
    }
}

/// Magnitude and phase (degrees) of a complex response.
pub fn mag_phase_deg(h: Complex64) -> (f64, f64) {
    (h.norm(), h.arg() * 180.0 / PI)
}
