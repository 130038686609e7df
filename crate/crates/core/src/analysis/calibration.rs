//! Error-signal calibration: a tanh fit to the central PDH slope, and the
//! inverse mapping from error volts to cavity length.

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::scan_fit::ScanFit;
use crate::error::{ensure_finite, Error, Result};
use crate::trace::{rms_about_mean, Trace};

/// y = amplitude·tanh((x − center)/width) + offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanhFit {
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
    pub offset: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl TanhFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * ((x - self.center) / self.width).tanh() + self.offset
    }

    /// Small-argument slope A/w.
    pub fn slope(&self) -> f64 {
        self.amplitude / self.width
    }
}

/// Least-squares tanh fit to (x, y). The sign of the amplitude follows the
/// data; the width is reported positive.
pub fn fit_tanh(x: &[f64], y: &[f64]) -> Result<TanhFit> {
    if x.len() != y.len() {
        return Err(Error::arg("y", "x and y lengths differ"));
    }
    if x.len() < 5 {
        return Err(Error::FitFailed {
            reason: format!("{} samples are too few for a tanh fit", x.len()),
            residual_norm: f64::NAN,
        });
    }
    let n = x.len();
    let (x_lo, x_hi) = (x[0], x[n - 1]);
    let half_len = 0.5 * (x_hi - x_lo).abs();
    if !(half_len > 0.0) {
        return Err(Error::arg("x", "abscissa must span a non-zero range"));
    }
    // Work in a centred, unit-scaled abscissa so the solver sees O(1) numbers.
    let mid = 0.5 * (x_lo + x_hi);
    let u: Vec<f64> = x.iter().map(|v| (v - mid) / half_len).collect();
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let half_range = 0.5 * (ymax - ymin);
    if !(half_range > 0.0) {
        return Err(Error::FitFailed {
            reason: "error trace is flat over the slope region".into(),
            residual_norm: f64::NAN,
        });
    }
    let sign = if y[n - 1] >= y[0] { 1.0 } else { -1.0 };
    let p0 = [1.1 * sign * half_range, 1.0 / 1.5, 0.0, 0.5 * (ymax + ymin)];
    let scale = [half_range, 1.0, 1.0, half_range];
    let fit = levenberg_marquardt(
        |p, out| {
            for i in 0..n {
                out[i] = p[0] * ((u[i] - p[2]) / p[1]).tanh() + p[3] - y[i];
            }
        },
        &p0,
        &scale,
        n,
        &LmOptions::default(),
    )?;
    let p = &fit.params;
    if !p.iter().all(|v| v.is_finite()) || p[1] == 0.0 {
        return Err(Error::FitFailed {
            reason: "tanh fit diverged".into(),
            residual_norm: fit.residual_norm,
        });
    }
    // tanh is odd: (A, w) and (−A, −w) describe the same curve.
    let (amplitude, width) = if p[1] < 0.0 { (-p[0], -p[1]) } else { (p[0], p[1]) };
    Ok(TanhFit {
        amplitude,
        width: width * half_len,
        center: mid + p[2] * half_len,
        offset: p[3],
        residual_norm: fit.residual_norm,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCalibration {
    /// Tanh amplitude, in error-signal units (V).
    pub amplitude: f64,
    pub offset: f64,
    /// Zero crossing on the scan time axis, s.
    pub center_s: f64,
    pub width_s: f64,
    /// Tanh width converted to optical frequency, Hz.
    pub width_hz: f64,
    /// Carrier FWHM from the scan fit, Hz.
    pub linewidth_hz: f64,
    /// Tanh width in units of the carrier FWHM; scales the length conversion.
    pub width_in_linewidths: f64,
    /// Small-signal slope, V/Hz.
    pub slope_v_per_hz: f64,
    /// Detuning interval fitted, relative to the zero crossing, Hz.
    pub linear_range_hz: [f64; 2],
    pub fit: TanhFit,
}

/// Fits the dispersive slope between the error extrema that straddle the
/// first fitted carrier.
pub fn calibrate_error_slope(error: &Trace, scan: &ScanFit) -> Result<ErrorCalibration> {
    error.validate()?;
    let carrier = scan.carriers().next().ok_or_else(|| Error::Analysis("scan fit has no carrier".into()))?;
    let fs = error.sample_rate_hz;
    let n = error.len();
    let idx = |t: f64| ((t * fs).round().max(0.0) as usize).min(n.saturating_sub(1));
    let c = idx(carrier.center_s);
    let lo = idx(carrier.center_s - carrier.fwhm_s);
    let hi = idx(carrier.center_s + carrier.fwhm_s);
    if hi <= lo + 4 || c <= lo || c >= hi {
        return Err(Error::arg("error", "trace does not cover the central slope of the carrier"));
    }
    let v = &error.values;
    let argmax = |a: usize, b: usize| (a..b).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
    let argmin = |a: usize, b: usize| (a..b).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
    let (i_max, i_min) = (argmax(lo, hi + 1), argmin(lo, hi + 1));
    let (a, b) = (i_max.min(i_min), i_max.max(i_min));
    if b < a + 5 || a > c || b < c {
        return Err(Error::Analysis("error extrema do not bracket the carrier".into()));
    }
    check_monotone(&v[a..=b])?;

    let x: Vec<f64> = (a..=b).map(|i| i as f64 / fs).collect();
    let fit = fit_tanh(&x, &v[a..=b])?;
    let cal = scan.axis_calibration_hz_per_s;
    let width_hz = fit.width * cal;
    Ok(ErrorCalibration {
        amplitude: fit.amplitude,
        offset: fit.offset,
        center_s: fit.center,
        width_s: fit.width,
        width_hz,
        linewidth_hz: scan.linewidth_hz,
        width_in_linewidths: width_hz / scan.linewidth_hz,
        slope_v_per_hz: fit.amplitude / width_hz,
        linear_range_hz: [(x[0] - fit.center) * cal, (x[x.len() - 1] - fit.center) * cal],
        fit,
    })
}

/// Rejects slope regions that reverse direction, judged on block averages so
/// that sample noise alone does not trip the check.
fn check_monotone(y: &[f64]) -> Result<()> {
    let blocks = 16.min(y.len() / 2).max(2);
    let size = y.len() / blocks;
    let means: Vec<f64> = (0..blocks)
        .map(|k| {
            let s = &y[k * size..(k + 1) * size];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    let sign = (means[blocks - 1] - means[0]).signum();
    if means.windows(2).any(|w| (w[1] - w[0]) * sign < 0.0) {
        return Err(Error::Analysis("error slope region is not monotone".into()));
    }
    Ok(())
}

/// A converted displacement trace with the samples that fell outside the
/// invertible range.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub trace: Trace,
    /// Indices of samples at or beyond the conversion limit; their values are
    /// held at the limit and left out of `rms_m`.
    pub clipped: Vec<usize>,
    /// Rms about the mean of the unclipped samples, m.
    pub rms_m: f64,
}

/// Cavity linewidth expressed as a length change, ΔL = λ/(2F).
pub fn linewidth_in_length(wavelength_m: f64, finesse: f64) -> f64 {
    wavelength_m / (2.0 * finesse)
}

/// Maps error samples to length through the inverse tanh:
/// x = w_len·atanh((e − offset)/A), where w_len is the tanh width expressed
/// as a length via ΔL = λ/(2F). The sign follows the scan direction.
pub fn error_to_displacement(
    error: &Trace,
    cal: &ErrorCalibration,
    finesse: f64,
    wavelength_m: f64,
) -> Result<Displacement> {
    error.validate()?;
    ensure_finite("finesse", finesse)?;
    ensure_finite("wavelength", wavelength_m)?;
    if finesse <= 0.0 || wavelength_m <= 0.0 {
        return Err(Error::arg("finesse", "finesse and wavelength must be positive"));
    }
    if !(cal.amplitude.is_finite() && cal.amplitude != 0.0 && cal.width_in_linewidths > 0.0) {
        return Err(Error::arg("calibration", "amplitude must be non-zero and width positive"));
    }
    let scale = cal.width_in_linewidths * linewidth_in_length(wavelength_m, finesse);
    let limit = 1.0 - 1e-12;
    let mut clipped = Vec::new();
    let mut kept = Vec::with_capacity(error.len());
    let values: Vec<f64> = error
        .values
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let u = (e - cal.offset) / cal.amplitude;
            if u.abs() >= limit {
                clipped.push(i);
                scale * (limit * u.signum()).atanh()
            } else {
                let x = scale * u.atanh();
                kept.push(x);
                x
            }
        })
        .collect();
    let mut trace = Trace::new(error.sample_rate_hz, "m", values);
    trace.t0 = error.t0;
    trace.metadata = error.metadata.clone();
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
    use proptest::prelude::*;

    fn cal_from(fit: TanhFit, linewidth_hz: f64) -> ErrorCalibration {
        ErrorCalibration {
            amplitude: fit.amplitude,
            offset: fit.offset,
            center_s: fit.center,
            width_s: fit.width,
            width_hz: fit.width,
            linewidth_hz,
            width_in_linewidths: fit.width / linewidth_hz,
            slope_v_per_hz: fit.slope(),
            linear_range_hz: [-1.0, 1.0],
            fit,
        }
    }

    #[test]
    fn tanh_self_fit() {
        let x: Vec<f64> = (0..400).map(|i| -2.0 + i as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|x| 0.7 * ((x - 0.1) / 0.5).tanh() - 0.05).collect();
        let f = fit_tanh(&x, &y).unwrap();
        assert!((f.amplitude - 0.7).abs() < 1e-7 && (f.width - 0.5).abs() < 1e-7, "{f:?}");
        assert!((f.center - 0.1).abs() < 1e-7 && (f.offset + 0.05).abs() < 1e-7);
    }

    #[test]
    fn linear_segment_gives_its_slope() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 1e-6).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0e3 * (x - 1e-4)).collect();
        let f = fit_tanh(&x, &y).unwrap();
        assert!((f.slope() / 3.0e3 - 1.0).abs() < 0.01, "{}", f.slope());
    }

    #[test]
    fn inverted_sign_gives_negative_amplitude() {
        let x: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| -2.0 * ((x - 150.0) / 40.0).tanh()).collect();
        let f = fit_tanh(&x, &y).unwrap();
        assert!(f.amplitude < 0.0 && f.width > 0.0);
        assert!((f.amplitude + 2.0).abs() < 1e-6 && (f.width - 40.0).abs() < 1e-5);
    }

    #[test]
    fn offset_maps_to_zero_and_linewidth_scale() {
        let fit = TanhFit { amplitude: 1.0, width: 1.0, center: 0.0, offset: 0.25, residual_norm: 0.0, iterations: 0, converged: true };
        let cal = cal_from(fit, 1.0);
        let tr = Trace::new(1.0, "V", vec![0.25, 0.25]);
        let d = error_to_displacement(&tr, &cal, 310.0, 737e-9).unwrap();
        assert!(d.trace.values.iter().all(|v| *v == 0.0));
        let dl = linewidth_in_length(737e-9, 310.0);
        assert!((dl - 1.1887e-9).abs() < 1e-12, "{dl}");
    }

    #[test]
    fn clipped_samples_are_flagged() {
        let fit = TanhFit { amplitude: 1.0, width: 1.0, center: 0.0, offset: 0.0, residual_norm: 0.0, iterations: 0, converged: true };
        let cal = cal_from(fit, 1.0);
        let tr = Trace::new(1.0, "V", vec![0.1, -0.1, 1.5, -1.0]);
        let d = error_to_displacement(&tr, &cal, 100.0, 1e-6).unwrap();
        assert_eq!(d.clipped, vec![2, 3]);
        assert!(d.trace.values.iter().all(|v| v.is_finite()));
        let s = 1e-6 / 200.0;
        assert!((d.rms_m - s * 0.1f64.atanh()).abs() < 1e-18);
    }

    proptest! {
        // Forward tanh model then inversion is the identity over the inner 90%.
        #[test]
        fn inverse_round_trip(a in 0.1f64..5.0, w in 0.1f64..3.0, off in -1.0f64..1.0, frac in -0.9f64..0.9) {
            let fit = TanhFit { amplitude: a, width: w, center: 0.0, offset: off, residual_norm: 0.0, iterations: 0, converged: true };
            let lw = 2.0;
            let cal = cal_from(fit, lw);
            let finesse = 310.0;
            let lambda = 737e-9;
            let scale = (w / lw) * linewidth_in_length(lambda, finesse);
            // A displacement inside ±90% of the linear range (±w in tanh units).
            let x = frac * scale;
            let e = a * (x / scale).tanh() + off;
            let d = error_to_displacement(&Trace::new(1.0, "V", vec![e]), &cal, finesse, lambda).unwrap();
            prop_assert!((d.trace.values[0] - x).abs() <= 5e-3 * x.abs() + 1e-9 * scale);
        }
    }
}
