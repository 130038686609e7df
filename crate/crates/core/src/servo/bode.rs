//! In-loop transfer-function measurement by sinusoidal injection.
//!
//! A tone is added at the piezo summing node of a locked loop; after
//! settling, the error signal and the injected tone are each projected on
//! e^{−iωt} over a whole number of periods and their ratio is reported.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Engine, LoopSetup, LoopState, RunOptions};
use crate::error::{ensure_finite, Error, Result};
use crate::vibration::NoiseSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodeOptions {
    /// Minimum settling time before demodulation, s.
    pub settle_s: f64,
    /// Minimum demodulation time, s.
    pub measure_s: f64,
    /// Minimum number of tone periods for both settling and demodulation.
    pub min_periods: f64,
    pub seed: u64,
}

impl Default for BodeOptions {
    fn default() -> Self {
        Self { settle_s: 0.02, measure_s: 0.02, min_periods: 20.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodePoint {
    pub f_hz: f64,
    pub gain_db: f64,
    pub phase_deg: f64,
    pub re: f64,
    pub im: f64,
    pub injection_amplitude: f64,
    pub valid: bool,
    pub retried: bool,
    /// Why the point is invalid, if it is.
    pub note: Option<String>,
}

impl BodePoint {
    pub fn response(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// `n` logarithmically spaced frequencies from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

enum Attempt {
    Ok(Complex64),
    Failed(String),
}

fn measure_once(
    setup: &LoopSetup,
    noise: Option<&NoiseSpec>,
    f: f64,
    amplitude: f64,
    options: &BodeOptions,
) -> Result<Attempt> {
    let fs = setup.servo.sample_rate_fs;
    let period = fs / f;
    let settle = (options.settle_s * fs).max(options.min_periods * period).ceil() as usize;
    let periods = (options.measure_s * f).max(options.min_periods).ceil();
    let measure = (periods * period).round() as usize;
    let run = RunOptions {
        duration_s: (settle + measure) as f64 / fs + 1.0 / fs,
        seed: options.seed,
        ..RunOptions::default()
    };
    let mut engine = Engine::new_locked(setup, noise, &run)?;
    let omega = TAU * f / fs;
    let mut y = Complex64::new(0.0, 0.0);
    let mut v = Complex64::new(0.0, 0.0);
    let mut min_transmission: f64 = 1.0;
    for i in 0..settle + measure {
        let phase = omega * i as f64;
        let inj = amplitude * phase.sin();
        let r = engine.step(inj);
        if r.state != LoopState::Locked {
            return Ok(Attempt::Failed(format!("lock lost at t = {:.6} s", r.t)));
        }
        if i >= settle {
            let lo = Complex64::from_polar(1.0, -phase);
            y += r.error * lo;
            v += inj * lo;
            min_transmission = min_transmission.min(r.transmission);
        }
    }
    // Transmission stays above half maximum while the detuning is within
    // ±linewidth/2, the linear part of the discriminant.
    if min_transmission < 0.5 {
        return Ok(Attempt::Failed(format!(
            "tone drove the cavity outside ±linewidth/2 (transmission fell to {min_transmission:.3})"
        )));
    }
    Ok(Attempt::Ok(y / v))
}

/// Measures the error-signal response to a piezo-drive injection at each
/// frequency. Points that lose lock or leave the linear discriminant range
/// are retried once at half amplitude, then marked invalid.
pub fn bode_measure(
    setup: &LoopSetup,
    noise: Option<&NoiseSpec>,
    f_points: &[f64],
    injection_amplitude: f64,
    options: &BodeOptions,
) -> Result<Vec<BodePoint>> {
    ensure_finite("injection_amplitude", injection_amplitude)?;
    if injection_amplitude <= 0.0 {
        return Err(Error::arg("injection_amplitude", "must be positive"));
    }
    let fs = setup.servo.sample_rate_fs;
    for &f in f_points {
        ensure_finite("frequency", f)?;
        if f <= 0.0 || f >= fs / 2.0 {
            return Err(Error::arg("frequency", format!("{f} Hz is outside (0, fs/2)")));
        }
    }
    setup.validate()?;
    let mut out = Vec::with_capacity(f_points.len());
    for &f in f_points {
        let mut amplitude = injection_amplitude;
        let mut retried = false;
        let mut attempt = measure_once(setup, noise, f, amplitude, options)?;
        if let Attempt::Failed(_) = attempt {
            retried = true;
            amplitude /= 2.0;
            attempt = measure_once(setup, noise, f, amplitude, options)?;
        }
        out.push(match attempt {
            Attempt::Ok(h) => BodePoint {
                f_hz: f,
                gain_db: 20.0 * h.norm().log10(),
                phase_deg: h.arg().to_degrees(),
                re: h.re,
                im: h.im,
                injection_amplitude: amplitude,
                valid: true,
                retried,
                note: None,
            },
            Attempt::Failed(why) => BodePoint {
                f_hz: f,
                gain_db: f64::NAN,
                phase_deg: f64::NAN,
                re: f64::NAN,
                im: f64::NAN,
                injection_amplitude: amplitude,
                valid: false,
                retried,
                note: Some(why),
            },
        });
    }
    Ok(out)
}

/// CSV with columns `f_hz,gain_db,phase_deg`.
pub fn to_csv(points: &[BodePoint]) -> String {
    let mut s = String::from("f_hz,gain_db,phase_deg\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{}\n",
            crate::trace::fmt_f64(p.f_hz),
            crate::trace::fmt_f64(p.gain_db),
            crate::trace::fmt_f64(p.phase_deg)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::CavityConfig;
    use crate::plant::PlantConfig;
    use crate::servo::LoopModel;

    #[test]
    fn zero_amplitude_rejected() {
        let setup = LoopSetup::tuned(CavityConfig::bare(), PlantConfig::bare()).unwrap();
        assert!(bode_measure(&setup, None, &[1e3], 0.0, &BodeOptions::default()).is_err());
        assert!(bode_measure(&setup, None, &[6e5], 1e-3, &BodeOptions::default()).is_err());
    }

    #[test]
    fn matches_model_off_resonance() {
        let setup = LoopSetup::tuned(CavityConfig::bare(), PlantConfig::bare()).unwrap();
        let model = LoopModel::new(&setup).unwrap();
        let pts = bode_measure(&setup, None, &[300.0, 3e3, 40e3], 5e-3, &BodeOptions::default()).unwrap();
        for p in pts {
            assert!(p.valid);
            let m = model.injection_response(p.f_hz);
            let db = p.gain_db - 20.0 * m.norm().log10();
            let mut dp = p.phase_deg - m.arg().to_degrees();
            dp -= 360.0 * (dp / 360.0).round();
            assert!(db.abs() < 1.0 && dp.abs() < 5.0, "{} Hz: {db} dB {dp} deg", p.f_hz);
        }
    }

    #[test]
    fn oversized_injection_retried_then_invalid() {
        let setup = LoopSetup::tuned(CavityConfig::bare(), PlantConfig::bare()).unwrap();
        let pts = bode_measure(&setup, None, &[50e3], 50.0, &BodeOptions::default()).unwrap();
        assert!(pts[0].retried);
        assert!(!pts[0].valid);
        assert!(pts[0].note.is_some());
    }

    #[test]
    fn log_spacing() {
        let f = log_spaced(100.0, 40e3, 20);
        assert_eq!(f.len(), 20);
        assert!((f[0] - 100.0).abs() < 1e-9 && (f[19] - 40e3).abs() < 1e-6);
        assert!((f[1] / f[0] - f[19] / f[18]).abs() < 1e-9);
    }
}
