//! Cavity scan fitting: Lorentzian triplets (carrier plus two modulation
//! sidebands) locate the resonances, the known sideband spacing converts the
//! time axis to frequency, and finesse follows as FSR / FWHM.

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::peaks::find_peaks;
use crate::error::{Error, Result};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanFitOptions {
    /// Sideband offset from the carrier, Hz. `None` (or a zero modulation
    /// depth) fits bare carriers and takes the axis scale from `ramp_rate`.
    pub modulation_frequency_hz: Option<f64>,
    /// Detuning sweep rate, Hz/s. Seeds the sideband positions; required when
    /// there are no sidebands. Falls back to the trace's `scan_rate_hz_per_s`
    /// metadata.
    pub ramp_rate_hz_per_s: Option<f64>,
    /// Free spectral range to use when the scan holds a single carrier.
    pub fsr_hz: Option<f64>,
    /// Carrier detection threshold as a fraction of the trace's full range.
    pub min_prominence: f64,
}

impl Default for ScanFitOptions {
    fn default() -> Self {
        Self {
            modulation_frequency_hz: None,
            ramp_rate_hz_per_s: None,
            fsr_hz: None,
            min_prominence: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanFitMode {
    /// One carrier; FSR supplied by the caller.
    Single,
    /// Two or more carriers; FSR measured from their spacing.
    Fsr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakRole {
    LowerSideband,
    Carrier,
    UpperSideband,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianPeak {
    pub role: PeakRole,
    /// Which carrier's triplet this peak belongs to, in time order.
    pub group: usize,
    pub center_s: f64,
    pub fwhm_s: f64,
    pub height: f64,
    pub center_std_s: f64,
    pub fwhm_std_s: f64,
    /// Centre relative to the first carrier, Hz.
    pub center_hz: f64,
    pub fwhm_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFit {
    pub mode: ScanFitMode,
    pub fsr_hz: f64,
    /// False when the FSR was supplied rather than measured.
    pub fsr_measured: bool,
    pub finesse: f64,
    /// Mean carrier FWHM, Hz.
    pub linewidth_hz: f64,
    pub linewidth_std_hz: f64,
    /// Frequency per second of scan time (magnitude).
    pub axis_calibration_hz_per_s: f64,
    /// Sideband spacing implied by the ramp rate, for cross-checking the
    /// calibration; present when both sidebands and a ramp rate are known.
    pub sideband_offset_from_ramp_hz: Option<f64>,
    pub peaks: Vec<LorentzianPeak>,
    /// Root-sum-square of the per-triplet residual norms.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ScanFit {
    /// Carrier peaks in time order.
    pub fn carriers(&self) -> impl Iterator<Item = &LorentzianPeak> {
        self.peaks.iter().filter(|p| p.role == PeakRole::Carrier)
    }
}

fn lorentzian(x: f64, center: f64, fwhm: f64, height: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    height / (1.0 + u * u)
}

struct GroupFit {
    /// (center, fwhm, height) in samples, with std errors of center and fwhm.
    peaks: Vec<([f64; 3], [f64; 2])>,
    residual_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Fits offset + Σ Lorentzians over samples [lo, hi).
fn fit_group(y: &[f64], lo: usize, hi: usize, init: &[[f64; 3]], offset0: f64) -> Result<GroupFit> {
    let xs: Vec<f64> = (lo..hi).map(|i| i as f64).collect();
    let ys = &y[lo..hi];
    let mut p0 = vec![offset0];
    let mut scale = vec![init.iter().map(|p| p[2]).fold(0.0, f64::max).max(1e-12)];
    for p in init {
        p0.extend_from_slice(p);
        scale.extend_from_slice(&[p[1], p[1], p[2].abs().max(scale[0] * 1e-3)]);
    }
    let k = init.len();
    let fit = levenberg_marquardt(
        |p, out| {
            for (i, x) in xs.iter().enumerate() {
                let mut v = p[0];
                for j in 0..k {
                    v += lorentzian(*x, p[1 + 3 * j], p[2 + 3 * j], p[3 + 3 * j]);
                }
                out[i] = v - ys[i];
            }
        },
        &p0,
        &scale,
        xs.len(),
        &LmOptions::default(),
    )?;
    let peaks = (0..k)
        .map(|j| {
            let b = 1 + 3 * j;
            (
                [fit.params[b], fit.params[b + 1].abs(), fit.params[b + 2]],
                [fit.std_errors[b], fit.std_errors[b + 1]],
            )
        })
        .collect();
    Ok(GroupFit {
        peaks,
        residual_norm: fit.residual_norm,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Why a group fit cannot describe a resonance (with sidebands), if it can't.
fn implausible(g: &GroupFit, lo: f64, hi: f64) -> Option<&'static str> {
    for (p, _) in &g.peaks {
        if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
            return Some("fit diverged");
        }
        if p[0] < lo || p[0] > hi {
            return Some("fitted peak lies outside the data window");
        }
        if !(p[1] > 0.0 && p[1] < hi - lo) {
            return Some("fitted width is not resolved by the window");
        }
        if !(p[2] > 0.0) {
            return Some("fitted peak has non-positive height");
        }
    }
    if let [lower, carrier, upper] = &g.peaks[..] {
        if !(lower.0[0] < carrier.0[0] && carrier.0[0] < upper.0[0]) {
            return Some("sidebands are not on either side of the carrier");
        }
        if !(carrier.0[2] > lower.0[2] && carrier.0[2] > upper.0[2]) {
            return Some("sidebands are taller than the carrier");
        }
    }
    None
}

fn metadata_rate(trace: &Trace) -> Option<f64> {
    trace.metadata.get("scan_rate_hz_per_s").and_then(|s| s.parse::<f64>().ok())
}

/// Fits a transmission scan.
///
/// Carriers are picked by prominence; each one is fitted together with its
/// sidebands inside a window wide enough to contain the triplet. With
/// sidebands the frequency axis comes from their fitted spacing (2Ω); without
/// them it comes from the ramp rate.
pub fn fit_scan(transmission: &Trace, options: &ScanFitOptions) -> Result<ScanFit> {
    transmission.validate()?;
    let y = &transmission.values;
    let fs = transmission.sample_rate_hz;
    let omega = options.modulation_frequency_hz.filter(|w| *w != 0.0).map(f64::abs);
    let rate = options
        .ramp_rate_hz_per_s
        .or_else(|| metadata_rate(transmission))
        .map(f64::abs)
        .filter(|r| r.is_finite() && *r > 0.0);
    if omega.is_none() && rate.is_none() {
        return Err(Error::arg(
            "ramp_rate_hz_per_s",
            "a ramp rate is required to scale the axis when there are no sidebands",
        ));
    }

    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range > 0.0) {
        return Err(Error::FitFailed {
            reason: "scan is flat; no resonances found".into(),
            residual_norm: f64::NAN,
        });
    }
    let mut carriers = find_peaks(y, options.min_prominence * range);
    carriers.sort_by_key(|p| p.index);
    let mode = match (carriers.len(), options.fsr_hz) {
        (0, _) => {
            return Err(Error::FitFailed {
                reason: "no carrier resonance found".into(),
                residual_norm: f64::NAN,
            })
        }
        (1, Some(_)) => ScanFitMode::Single,
        (1, None) => {
            return Err(Error::FitFailed {
                reason: "one carrier found; two are needed to measure the FSR (or supply it)".into(),
                residual_norm: f64::NAN,
            })
        }
        _ => ScanFitMode::Fsr,
    };

    // Sideband offset in samples, seeded from the ramp rate or, lacking one,
    // from the carrier spacing and the supplied FSR.
    let sideband_samples = match (omega, rate) {
        (Some(w), Some(r)) => Some(w / r * fs),
        (Some(w), None) => match (carriers.len(), options.fsr_hz) {
            (n, Some(fsr)) if n >= 2 => Some(w / fsr * (carriers[1].index - carriers[0].index) as f64),
            _ => {
                return Err(Error::arg(
                    "ramp_rate_hz_per_s",
                    "a ramp rate (or FSR with two carriers) is needed to locate the sidebands",
                ))
            }
        },
        (None, _) => None,
    };

    let mut groups = Vec::new();
    let (mut rss, mut iterations, mut converged) = (0.0, 0, true);
    for c in &carriers {
        let width = c.width.max(2.0);
        let reach = sideband_samples.unwrap_or(0.0) + 6.0 * width;
        let lo = (c.index as f64 - reach).floor().max(0.0) as usize;
        let hi = ((c.index as f64 + reach).ceil() as usize + 1).min(y.len());
        let base = y[lo].min(y[hi - 1]);
        let carrier_init = [c.index as f64, width, c.height - base];
        let init: Vec<[f64; 3]> = match sideband_samples {
            Some(s) => {
                let side = |pos: f64| {
                    let i = (pos.round().max(0.0) as usize).min(y.len() - 1);
                    let tail = lorentzian(pos, carrier_init[0], carrier_init[1], carrier_init[2]);
                    [pos, width, (y[i] - base - tail).max(0.01 * carrier_init[2])]
                };
                vec![side(c.index as f64 - s), carrier_init, side(c.index as f64 + s)]
            }
            None => vec![carrier_init],
        };
        let g = fit_group(y, lo, hi, &init, base)?;
        rss += g.residual_norm * g.residual_norm;
        iterations += g.iterations;
        converged &= g.converged;
        if let Some(reason) = implausible(&g, lo as f64, hi as f64) {
            return Err(Error::FitFailed {
                reason: format!("resonance near sample {}: {reason}", c.index),
                residual_norm: rss.sqrt(),
            });
        }
        groups.push(g);
    }

    let dt = 1.0 / fs;
    let carrier_of = |g: &GroupFit| if g.peaks.len() == 3 { 1 } else { 0 };
    let calibration = match omega {
        Some(w) => {
            let spacing: Vec<f64> = groups
                .iter()
                .map(|g| (g.peaks[2].0[0] - g.peaks[0].0[0]).abs() * dt)
                .collect();
            let mean_spacing = spacing.iter().sum::<f64>() / spacing.len() as f64;
            if !(mean_spacing > 0.0) {
                return Err(Error::FitFailed {
                    reason: "sidebands collapsed onto each other".into(),
                    residual_norm: rss.sqrt(),
                });
            }
            2.0 * w / mean_spacing
        }
        None => rate.expect("checked above"),
    };

    let fwhm_s: Vec<f64> = groups.iter().map(|g| g.peaks[carrier_of(g)].0[1] * dt).collect();
    let linewidth = calibration * fwhm_s.iter().sum::<f64>() / fwhm_s.len() as f64;
    let linewidth_std = calibration * dt
        * (groups
            .iter()
            .map(|g| g.peaks[carrier_of(g)].1[1].powi(2))
            .sum::<f64>())
        .sqrt()
        / groups.len() as f64;

    let centers: Vec<f64> = groups.iter().map(|g| g.peaks[carrier_of(g)].0[0] * dt).collect();
    let (fsr, fsr_measured) = match mode {
        ScanFitMode::Fsr => {
            let span = centers[centers.len() - 1] - centers[0];
            (calibration * span / (centers.len() - 1) as f64, true)
        }
        ScanFitMode::Single => (options.fsr_hz.expect("single mode requires an FSR"), false),
    };

    let t0 = centers[0];
    let mut peaks = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let roles: &[PeakRole] = if g.peaks.len() == 3 {
            &[PeakRole::LowerSideband, PeakRole::Carrier, PeakRole::UpperSideband]
        } else {
            &[PeakRole::Carrier]
        };
        for ((p, e), role) in g.peaks.iter().zip(roles) {
            peaks.push(LorentzianPeak {
                role: *role,
                group: gi,
                center_s: p[0] * dt,
                fwhm_s: p[1] * dt,
                height: p[2],
                center_std_s: e[0] * dt,
                fwhm_std_s: e[1] * dt,
                center_hz: (p[0] * dt - t0) * calibration,
                fwhm_hz: p[1] * dt * calibration,
            });
        }
    }

    let sideband_offset_from_ramp_hz = match (omega, rate) {
        (Some(w), Some(r)) => Some(w / calibration * r),
        _ => None,
    };

    Ok(ScanFit {
        mode,
        fsr_hz: fsr,
        fsr_measured,
        finesse: fsr / linewidth,
        linewidth_hz: linewidth,
        linewidth_std_hz: linewidth_std,
        axis_calibration_hz_per_s: calibration,
        sideband_offset_from_ramp_hz,
        peaks,
        residual_norm: rss.sqrt(),
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorentz_trace(centers: &[(f64, f64, f64)], n: usize, fs: f64) -> Trace {
        let v = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                centers.iter().map(|(c, w, h)| lorentzian(t, *c, *w, *h)).sum::<f64>()
            })
            .collect();
        Trace::new(fs, "normalized_power", v)
    }

    #[test]
    fn single_lorentzian_exact_recovery() {
        // 1 ms, 1 MHz sampling, one carrier at 0.4 ms with 20 µs FWHM.
        let tr = lorentz_trace(&[(0.4e-3, 20e-6, 0.8)], 1000, 1e6);
        let rate = 1e12; // Hz/s
        let fit = fit_scan(
            &tr,
            &ScanFitOptions {
                ramp_rate_hz_per_s: Some(rate),
                fsr_hz: Some(4.6e9),
                ..ScanFitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(fit.mode, ScanFitMode::Single);
        let c = fit.carriers().next().unwrap();
        assert!((c.center_s - 0.4e-3).abs() < 1e-12, "{}", c.center_s);
        assert!((c.fwhm_s / 20e-6 - 1.0).abs() < 1e-8);
        assert!((c.height / 0.8 - 1.0).abs() < 1e-8);
        assert!((fit.linewidth_hz / 20e6 - 1.0).abs() < 1e-8);
        assert!((fit.finesse / (4.6e9 / 20e6) - 1.0).abs() < 1e-8);
        assert!(fit.residual_norm < 1e-9);
    }

    #[test]
    fn triplet_axis_from_sidebands() {
        // Sidebands at ±100 µs around a 500 µs carrier, 10 µs FWHM.
        let fs = 1e6;
        let omega = 150e6;
        let tr = lorentz_trace(
            &[(0.4e-3, 10e-6, 0.03), (0.5e-3, 10e-6, 0.9), (0.6e-3, 10e-6, 0.03)],
            1000,
            fs,
        );
        let fit = fit_scan(
            &tr,
            &ScanFitOptions {
                modulation_frequency_hz: Some(omega),
                ramp_rate_hz_per_s: Some(1.4e12),
                fsr_hz: Some(4.6e9),
                ..ScanFitOptions::default()
            },
        )
        .unwrap();
        // 2Ω over 200 µs.
        assert!((fit.axis_calibration_hz_per_s / 1.5e12 - 1.0).abs() < 1e-8);
        assert!((fit.linewidth_hz / 15e6 - 1.0).abs() < 1e-7);
        let from_ramp = fit.sideband_offset_from_ramp_hz.unwrap();
        assert!((from_ramp / (omega * 1.4 / 1.5) - 1.0).abs() < 1e-8);
        assert_eq!(fit.peaks.len(), 3);
    }

    #[test]
    fn two_carriers_measure_fsr() {
        let fs = 1e6;
        let tr = lorentz_trace(&[(0.2e-3, 8e-6, 1.0), (0.7e-3, 8e-6, 1.0)], 1000, fs);
        let fit = fit_scan(
            &tr,
            &ScanFitOptions {
                ramp_rate_hz_per_s: Some(1e13),
                ..ScanFitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(fit.mode, ScanFitMode::Fsr);
        assert!(fit.fsr_measured);
        assert!((fit.fsr_hz / 5e9 - 1.0).abs() < 1e-6, "{}", fit.fsr_hz);
        assert!((fit.finesse / (5e9 / 80e6) - 1.0).abs() < 1e-5, "{}", fit.finesse);
    }

    #[test]
    fn missing_peaks_are_reported() {
        let flat = Trace::new(1e6, "normalized_power", vec![0.1; 100]);
        let opts = ScanFitOptions { ramp_rate_hz_per_s: Some(1e12), ..ScanFitOptions::default() };
        assert!(fit_scan(&flat, &opts).unwrap_err().is_analysis_failure());
        let one = lorentz_trace(&[(0.5e-3, 10e-6, 1.0)], 1000, 1e6);
        let err = fit_scan(&one, &opts).unwrap_err();
        assert!(err.is_analysis_failure(), "{err}");
    }

    #[test]
    fn slow_sine_is_not_a_resonance() {
        let values: Vec<f64> = (0..20_000).map(|i| 0.5 + 1e-3 * (i as f64 * 7e-4).sin()).collect();
        let tr = Trace::new(1e4, "normalized_power", values);
        let opts = ScanFitOptions {
            modulation_frequency_hz: Some(150e6),
            ramp_rate_hz_per_s: Some(1e12),
            ..ScanFitOptions::default()
        };
        let err = fit_scan(&tr, &opts).unwrap_err();
        assert!(err.is_analysis_failure(), "{err}");
    }

    #[test]
    fn needs_an_axis_scale() {
        let one = lorentz_trace(&[(0.5e-3, 10e-6, 1.0)], 1000, 1e6);
        let err = fit_scan(&one, &ScanFitOptions { fsr_hz: Some(1e9), ..ScanFitOptions::default() }).unwrap_err();
        assert!(!err.is_analysis_failure());
    }
}
