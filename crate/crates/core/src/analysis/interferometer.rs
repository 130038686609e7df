//! Michelson fringe calibration and displacement conversion.
//!
//! A fringe scan is fitted with y = A·sin(2πft + φ) + D; a signal recorded
//! near mid-fringe is then converted with δx = asin((y − D)/A)·λ/(4π).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::calibration::Displacement;
use super::lm::{levenberg_marquardt, LmOptions};
use crate::error::{ensure_finite, Error, Result};
use crate::trace::{rms_about_mean, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub amplitude: f64,
    pub frequency_hz: f64,
    /// Phase at the trace's first sample, in (−π, π].
    pub phase_rad: f64,
    pub offset: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FringeFit {
    /// Model value at time `t` measured from the first sample.
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency_hz * t + self.phase_rad).sin() + self.offset
    }
}

/// Frequency, amplitude and phase of the dominant tone, from a zero-padded
/// FFT refined by parabolic interpolation of the peak bin.
fn initial_guess(y: &[f64], fs: f64) -> (f64, f64, f64, f64) {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let m = (4 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = y.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mag: Vec<f64> = buf[..m / 2].iter().map(|c| c.norm()).collect();
    let k = (1..m / 2).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(1);
    let shift = if k + 1 < m / 2 {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        let den = a - 2.0 * b + c;
        if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 }
    } else {
        0.0
    };
    let f = (k as f64 + shift) * fs / m as f64;
    // Direct DFT at the refined frequency for amplitude and phase.
    let x: Complex64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean) * Complex64::from_polar(1.0, -TAU * f * i as f64 / fs))
        .sum();
    let amp = 2.0 * x.norm() / n as f64;
    let phase = x.arg() + PI / 2.0;
    (amp, f, phase, mean)
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Sinusoid fit to a fringe scan spanning at least one full fringe.
pub fn interferometer_calibrate(fringe: &Trace) -> Result<FringeFit> {
    fringe.validate()?;
    let y = &fringe.values;
    let fs = fringe.sample_rate_hz;
    if y.len() < 8 {
        return Err(Error::arg("fringe", "too few samples for a sinusoid fit"));
    }
    let (a0, f0, phi0, d0) = initial_guess(y, fs);
    if !(a0 > 0.0) {
        return Err(Error::FitFailed {
            reason: "fringe scan is flat".into(),
            residual_norm: f64::NAN,
        });
    }
    let t: Vec<f64> = (0..y.len()).map(|i| i as f64 / fs).collect();
    let fit = levenberg_marquardt(
        |p, out| {
            for i in 0..t.len() {
                out[i] = p[0] * (TAU * p[1] * t[i] + p[2]).sin() + p[3] - y[i];
            }
        },
        &[a0, f0, phi0, d0],
        &[a0, f0, 1.0, a0],
        y.len(),
        &LmOptions::default(),
    )?;
    let p = &fit.params;
    if !p.iter().all(|v| v.is_finite()) || p[1] <= 0.0 {
        return Err(Error::FitFailed {
            reason: "sinusoid fit diverged".into(),
            residual_norm: fit.residual_norm,
        });
    }
    if p[1] * fringe.duration() < 1.0 {
        return Err(Error::arg("fringe", "scan must span at least one full fringe"));
    }
    let (amplitude, phase) = if p[0] < 0.0 { (-p[0], p[2] + PI) } else { (p[0], p[2]) };
    Ok(FringeFit {
        amplitude,
        frequency_hz: p[1],
        phase_rad: wrap_phase(phase),
        offset: p[3],
        residual_norm: fit.residual_norm,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Converts an interferometer signal to displacement sample by sample.
/// Samples with |y − D| > A are clipped to ±1 before the arcsine and
/// counted; no fringe unwrapping is attempted.
pub fn interferometer_convert(signal: &Trace, cal: &FringeFit, wavelength_m: f64) -> Result<Displacement> {
    signal.validate()?;
    ensure_finite("wavelength", wavelength_m)?;
    if wavelength_m <= 0.0 {
        return Err(Error::arg("wavelength", "must be positive"));
    }
    if !(cal.amplitude > 0.0) {
        return Err(Error::arg("calibration", "fringe amplitude must be positive"));
    }
    let k = wavelength_m / (4.0 * PI);
    let mut clipped = Vec::new();
    let mut kept = Vec::with_capacity(signal.len());
    let values: Vec<f64> = signal
        .values
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let u = (y - cal.offset) / cal.amplitude;
            if u.abs() > 1.0 {
                clipped.push(i);
                k * u.clamp(-1.0, 1.0).asin()
            } else {
                let x = k * u.asin();
                kept.push(x);
                x
            }
        })
        .collect();
    let mut trace = Trace::new(signal.sample_rate_hz, "m", values);
    trace.t0 = signal.t0;
    trace.metadata = signal.metadata.clone();
    trace.metadata.insert("clipped_samples".into(), clipped.len().to_string());
    Ok(Displacement {
        trace,
        clipped,
        rms_m: rms_about_mean(&kept),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fringe(a: f64, f: f64, phi: f64, d: f64, n: usize, fs: f64) -> Trace {
        Trace::new(fs, "V", (0..n).map(|i| a * (TAU * f * i as f64 / fs + phi).sin() + d).collect())
    }

    #[test]
    fn recovers_sinusoid_parameters() {
        let tr = fringe(0.8, 13.7, -2.1, 0.3, 5000, 1000.0);
        let fit = interferometer_calibrate(&tr).unwrap();
        assert!((fit.amplitude - 0.8).abs() < 1e-9, "{fit:?}");
        assert!((fit.frequency_hz - 13.7).abs() < 1e-9);
        assert!((fit.phase_rad + 2.1).abs() < 1e-8);
        assert!((fit.offset - 0.3).abs() < 1e-9);
    }

    #[test]
    fn rejects_partial_fringe() {
        let tr = fringe(1.0, 0.5, 0.0, 0.0, 1000, 1000.0);
        assert!(interferometer_calibrate(&tr).is_err());
    }

    #[test]
    fn conversion_anchors() {
        let cal = FringeFit { amplitude: 2.0, frequency_hz: 1.0, phase_rad: 0.0, offset: 0.5, residual_norm: 0.0, iterations: 0, converged: true };
        let lambda = 737e-9;
        let tr = Trace::new(1.0, "V", vec![0.5, 2.5, -1.5, 3.0]);
        let d = interferometer_convert(&tr, &cal, lambda).unwrap();
        assert_eq!(d.trace.values[0], 0.0);
        // Full-amplitude excursion is a quarter-wave phase: λ/8.
        assert!((d.trace.values[1] - lambda / 8.0).abs() < 1e-18);
        assert!((d.trace.values[1] - 92.125e-9).abs() < 1e-12);
        assert!((d.trace.values[2] + lambda / 8.0).abs() < 1e-18);
        assert_eq!(d.clipped, vec![3]);
        assert!((d.trace.values[3] - lambda / 8.0).abs() < 1e-18);
    }
}
