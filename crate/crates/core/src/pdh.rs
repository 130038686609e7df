//! Pound-Drever-Hall error signal and synthetic cavity scans.
//!
//! The laser carries phase-modulation sidebands at ±Ω. The demodulated
//! reflection signal is
//!
//! ε(δ) = −G · 2·J0(β)·J1(β) · Im[F(δ)·F*(δ+Ω) − F*(δ)·F(δ−Ω)]
//!
//! with F the cavity amplitude reflection. The overall sign is chosen so
//! that ε rises through zero at resonance as the detuning increases.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{CavityConfig, CavityResponse};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, SeededRng};
use crate::special::{bessel_j0, bessel_j1};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdhConfig {
    #[serde(rename = "modulation_frequency_Omega")]
    pub modulation_frequency_omega: f64,
    /// Phase-modulation depth, radians.
    pub modulation_depth_beta: f64,
    /// Volts per unit of normalized optical power.
    pub detector_gain: f64,
    /// White Gaussian noise added to the error signal, volts rms.
    pub detector_noise_rms: f64,
}

impl Default for PdhConfig {
    fn default() -> Self {
        Self {
            modulation_frequency_omega: 150e6,
            modulation_depth_beta: 0.3,
            detector_gain: 1.0,
            detector_noise_rms: 0.0,
        }
    }
}

impl PdhConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("modulation_frequency_Omega", self.modulation_frequency_omega)?;
        ensure_finite("modulation_depth_beta", self.modulation_depth_beta)?;
        ensure_finite("detector_gain", self.detector_gain)?;
        ensure_finite("detector_noise_rms", self.detector_noise_rms)?;
        if self.modulation_frequency_omega <= 0.0 {
            return Err(Error::InvalidConfig("modulation_frequency_Omega must be positive".into()));
        }
        if !(0.0..=10.0).contains(&self.modulation_depth_beta) {
            return Err(Error::InvalidConfig(
                "modulation_depth_beta must lie in [0, 10] rad".into(),
            ));
        }
        if self.detector_noise_rms < 0.0 {
            return Err(Error::InvalidConfig("detector_noise_rms must be non-negative".into()));
        }
        Ok(())
    }

    /// Fraction of optical power in the carrier, J0(β)².
    pub fn carrier_power(&self) -> f64 {
        bessel_j0(self.modulation_depth_beta).powi(2)
    }

    /// Fraction of optical power in each first-order sideband, J1(β)².
    pub fn sideband_power(&self) -> f64 {
        bessel_j1(self.modulation_depth_beta).powi(2)
    }
}

/// Cavity and modulation combined into a fast evaluator.
#[derive(Debug, Clone, Copy)]
pub struct PdhModel {
    pub cavity: CavityResponse,
    /// e^{iφΩ}, the round-trip phase of the upper sideband relative to the carrier.
    sideband_phasor: Complex64,
    scale: f64,
    carrier_power: f64,
    sideband_power: f64,
    pub modulation_frequency: f64,
}

/// Error signal and transmitted power at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdhSample {
    pub error: f64,
    /// Transmitted power as a fraction of the incident laser power.
    pub transmission: f64,
}

impl PdhModel {
    pub fn new(cavity: &CavityConfig, pdh: &PdhConfig) -> Result<Self> {
        pdh.validate()?;
        let response = CavityResponse::new(cavity)?;
        let beta = pdh.modulation_depth_beta;
        Ok(Self {
            cavity: response,
            sideband_phasor: Complex64::from_polar(1.0, response.phase(pdh.modulation_frequency_omega)),
            scale: -pdh.detector_gain * 2.0 * bessel_j0(beta) * bessel_j1(beta),
            carrier_power: pdh.carrier_power(),
            sideband_power: pdh.sideband_power(),
            modulation_frequency: pdh.modulation_frequency_omega,
        })
    }

    /// Evaluates at a carrier round-trip phase φ (mod 2π).
    #[inline]
    pub fn at_phase(&self, phase: f64) -> PdhSample {
        let (s, c) = phase.sin_cos();
        let p0 = Complex64::new(c, s);
        let pu = p0 * self.sideband_phasor;
        let pl = p0 * self.sideband_phasor.conj();
        let f0 = self.cavity.reflection_phasor(p0);
        let fu = self.cavity.reflection_phasor(pu);
        let fl = self.cavity.reflection_phasor(pl);
        let beat = f0 * fu.conj() - f0.conj() * fl;
        let transmission = self.carrier_power * self.cavity.transmission_phasor(p0)
            + self.sideband_power
                * (self.cavity.transmission_phasor(pu) + self.cavity.transmission_phasor(pl));
        PdhSample {
            error: self.scale * beat.im,
            transmission,
        }
    }

    pub fn at_detuning(&self, detuning_hz: f64) -> PdhSample {
        self.at_phase(self.cavity.phase(detuning_hz))
    }

    pub fn at_length(&self, length_offset_m: f64) -> PdhSample {
        self.at_phase(self.cavity.phase_from_length(length_offset_m))
    }

    pub fn error_signal(&self, detuning_hz: f64) -> f64 {
        self.at_detuning(detuning_hz).error
    }

    /// Transmission with carrier exactly on resonance.
    pub fn peak_transmission(&self) -> f64 {
        self.at_phase(0.0).transmission
    }

    /// Analytic dε/dδ in V/Hz.
    pub fn slope_per_hz(&self, detuning_hz: f64) -> f64 {
        let phase = self.cavity.phase(detuning_hz);
        let p0 = Complex64::from_polar(1.0, phase);
        let pu = p0 * self.sideband_phasor;
        let pl = p0 * self.sideband_phasor.conj();
        let c = &self.cavity;
        let (f0, fu, fl) = (c.reflection_phasor(p0), c.reflection_phasor(pu), c.reflection_phasor(pl));
        let (d0, du, dl) = (
            c.reflection_phase_derivative(p0),
            c.reflection_phase_derivative(pu),
            c.reflection_phase_derivative(pl),
        );
        let dbeat = d0 * fu.conj() + f0 * du.conj() - d0.conj() * fl - f0.conj() * dl;
        self.scale * dbeat.im * 2.0 * PI / c.fsr
    }

    /// Analytic dε/dL at resonance in V/m (the discriminant slope).
    pub fn slope_per_meter(&self) -> f64 {
        self.slope_per_hz(0.0) * 2.0 * self.cavity.fsr / self.cavity.wavelength
    }
}

/// Convenience wrapper evaluating ε at one detuning.
pub fn error_signal(cavity: &CavityConfig, pdh: &PdhConfig, detuning_hz: f64) -> Result<f64> {
    ensure_finite("detuning", detuning_hz)?;
    Ok(PdhModel::new(cavity, pdh)?.error_signal(detuning_hz))
}

/// A linear sweep of the laser-cavity detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRamp {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
}

impl ScanRamp {
    /// Symmetric ramp around resonance spanning ±`half_span_hz`.
    pub fn centered(half_span_hz: f64, duration_s: f64, sample_rate_hz: f64) -> Self {
        Self {
            start_hz: -half_span_hz,
            stop_hz: half_span_hz,
            duration_s,
            sample_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("start_hz", self.start_hz),
            ("stop_hz", self.stop_hz),
            ("duration_s", self.duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
        ] {
            ensure_finite(name, v)?;
        }
        if self.duration_s <= 0.0 || self.sample_rate_hz <= 0.0 {
            return Err(Error::InvalidConfig("scan duration and sample rate must be positive".into()));
        }
        if self.start_hz == self.stop_hz {
            return Err(Error::InvalidConfig("scan start and stop must differ".into()));
        }
        if self.samples() < 2 {
            return Err(Error::InvalidConfig("scan must contain at least two samples".into()));
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    /// Detuning change per second of scan time.
    pub fn rate_hz_per_s(&self) -> f64 {
        (self.stop_hz - self.start_hz) / self.duration_s
    }

    pub fn detuning_at(&self, t: f64) -> f64 {
        self.start_hz + self.rate_hz_per_s() * t
    }

    /// Time at which the ramp passes through `detuning_hz`.
    pub fn time_of(&self, detuning_hz: f64) -> f64 {
        (detuning_hz - self.start_hz) / self.rate_hz_per_s()
    }
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub transmission: Trace,
    pub error: Trace,
    /// Whether some carrier resonance and both its sidebands lie inside the ramp.
    pub covers_triplet: bool,
    pub warnings: Vec<String>,
}

/// Number of carrier resonances whose full triplet lies inside [lo, hi].
fn complete_triplets(lo: f64, hi: f64, fsr: f64, omega: f64) -> i64 {
    let first = ((lo + omega) / fsr).ceil() as i64;
    let last = ((hi - omega) / fsr).floor() as i64;
    (last - first + 1).max(0)
}

/// Simulates a detuning sweep, returning transmission and error traces on a
/// shared time base. Detector noise, if configured, is drawn from `seed`.
pub fn scan_spectrum(
    cavity: &CavityConfig,
    pdh: &PdhConfig,
    ramp: &ScanRamp,
    seed: u64,
) -> Result<ScanResult> {
    ramp.validate()?;
    let model = PdhModel::new(cavity, pdh)?;
    let n = ramp.samples();
    let dt = 1.0 / ramp.sample_rate_hz;
    let mut noise = SeededRng::new(seed, rng::stream::SCAN_NOISE);
    let mut tr = Vec::with_capacity(n);
    let mut er = Vec::with_capacity(n);
    for i in 0..n {
        let s = model.at_detuning(ramp.detuning_at(i as f64 * dt));
        tr.push(s.transmission);
        let e = if pdh.detector_noise_rms > 0.0 {
            s.error + pdh.detector_noise_rms * noise.normal()
        } else {
            s.error
        };
        er.push(e);
    }

    let lo = ramp.start_hz.min(ramp.stop_hz);
    let hi = ramp.start_hz.max(ramp.stop_hz);
    let triplets = complete_triplets(lo, hi, model.cavity.fsr, pdh.modulation_frequency_omega);
    let mut warnings = Vec::new();
    if triplets == 0 {
        warnings.push(format!(
            "ramp [{lo:e}, {hi:e}] Hz does not contain a carrier resonance with both sidebands"
        ));
    }

    let annotate = |t: Trace| {
        t.with_meta("seed", seed)
            .with_meta("scan_start_hz", crate::trace::fmt_f64(ramp.start_hz))
            .with_meta("scan_rate_hz_per_s", crate::trace::fmt_f64(ramp.rate_hz_per_s()))
            .with_meta("modulation_frequency_hz", crate::trace::fmt_f64(pdh.modulation_frequency_omega))
    };
    Ok(ScanResult {
        transmission: annotate(Trace::new(ramp.sample_rate_hz, "normalized_power", tr)),
        error: annotate(Trace::new(ramp.sample_rate_hz, "V", er)),
        covers_triplet: triplets > 0,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::derive;
    use proptest::prelude::*;

    fn bare() -> PdhModel {
        PdhModel::new(&CavityConfig::bare(), &PdhConfig::default()).unwrap()
    }

    #[test]
    fn zero_at_resonance() {
        for cfg in [CavityConfig::bare(), CavityConfig::diamond()] {
            let e = error_signal(&cfg, &PdhConfig::default(), 0.0).unwrap();
            assert!(e.abs() < 1e-14, "{e}");
        }
    }

    #[test]
    fn odd_symmetry_on_grid() {
        let m = bare();
        for i in 1..2000 {
            let d = i as f64 * 0.2e6;
            let (a, b) = (m.error_signal(d), m.error_signal(-d));
            assert!((a + b).abs() <= 1e-12 * a.abs().max(1e-12), "δ={d}: {a} {b}");
        }
    }

    #[test]
    fn slope_matches_central_difference() {
        for cfg in [CavityConfig::bare(), CavityConfig::diamond()] {
            let m = PdhModel::new(&cfg, &PdhConfig::default()).unwrap();
            let h = 1e3;
            let numeric = (m.error_signal(h) - m.error_signal(-h)) / (2.0 * h);
            let analytic = m.slope_per_hz(0.0);
            assert!(analytic > 0.0);
            assert!(((numeric - analytic) / analytic).abs() < 1e-3, "{numeric} {analytic}");
        }
    }

    #[test]
    fn slope_derivative_off_resonance() {
        let m = bare();
        for d in [3e6, -11e6, 140e6, 160e6] {
            let h = 1e2;
            let numeric = (m.error_signal(d + h) - m.error_signal(d - h)) / (2.0 * h);
            let analytic = m.slope_per_hz(d);
            assert!((numeric - analytic).abs() < 1e-3 * analytic.abs().max(1e-12), "{d}");
        }
    }

    /// Sign changes of ε on a fine grid within ±1.5Ω.
    fn zero_crossings(m: &PdhModel, omega: f64) -> Vec<f64> {
        let n = 300_000;
        let span = 1.5 * omega;
        let mut out = Vec::new();
        let mut prev = m.error_signal(-span);
        for i in 1..=n {
            let d = -span + 2.0 * span * i as f64 / n as f64;
            let e = m.error_signal(d);
            if e == 0.0 {
                out.push(d);
                continue;
            }
            if prev != 0.0 && (prev < 0.0) != (e < 0.0) {
                out.push(d);
            }
            prev = e;
        }
        out
    }

    #[test]
    fn crossings_at_carrier_and_sidebands() {
        // Modulation frequency well above the linewidth in both cases. The
        // carrier crossing is exact by symmetry; the sideband crossings are
        // pulled slightly by the off-resonant carrier phase.
        for (cfg, omega) in [(CavityConfig::bare(), 150e6), (CavityConfig::diamond(), 400e6)] {
            let lw = derive(&cfg).unwrap().linewidth_fwhm;
            let pdh = PdhConfig { modulation_frequency_omega: omega, ..PdhConfig::default() };
            let m = PdhModel::new(&cfg, &pdh).unwrap();
            let z = zero_crossings(&m, pdh.modulation_frequency_omega);
            for target in [-pdh.modulation_frequency_omega, 0.0, pdh.modulation_frequency_omega] {
                assert!(
                    z.iter().any(|x| (x - target).abs() < 0.05 * lw),
                    "no crossing near {target}: {z:?}"
                );
            }
        }
    }

    #[test]
    fn triplet_height_ratio_is_bessel_ratio() {
        // Sidebands far enough out that the Lorentzian tails do not overlap.
        let pdh = PdhConfig { modulation_frequency_omega: 1e9, ..PdhConfig::default() };
        let m = PdhModel::new(&CavityConfig::bare(), &pdh).unwrap();
        let carrier = m.at_detuning(0.0).transmission;
        let side = m.at_detuning(pdh.modulation_frequency_omega).transmission;
        let j = bessel_j1(0.3) / bessel_j0(0.3);
        assert!(((side / carrier) / (j * j) - 1.0).abs() < 0.01);
        // Sidebands carry less than 3 % of the carrier power.
        let pdh = PdhConfig::default();
        assert!(pdh.sideband_power() / pdh.carrier_power() < 0.03);
    }

    #[test]
    fn no_sidebands_without_modulation() {
        let pdh = PdhConfig { modulation_depth_beta: 0.0, ..PdhConfig::default() };
        let m = PdhModel::new(&CavityConfig::bare(), &pdh).unwrap();
        assert_eq!(m.at_detuning(150e6).transmission, m.cavity.transmission(150e6));
        assert_eq!(m.error_signal(5e6), 0.0);
    }

    #[test]
    fn scan_flags_short_ramp() {
        let cfg = CavityConfig::bare();
        let pdh = PdhConfig::default();
        let short = ScanRamp::centered(100e6, 1e-3, 1e6);
        let r = scan_spectrum(&cfg, &pdh, &short, 0).unwrap();
        assert!(!r.covers_triplet);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.transmission.len(), 1000);
        let wide = ScanRamp::centered(300e6, 1e-3, 1e6);
        let r = scan_spectrum(&cfg, &pdh, &wide, 0).unwrap();
        assert!(r.covers_triplet);
        assert!(r.warnings.is_empty());
        assert_eq!(r.error.len(), r.transmission.len());
    }

    #[test]
    fn scan_noise_is_seeded() {
        let pdh = PdhConfig { detector_noise_rms: 1e-3, ..PdhConfig::default() };
        let ramp = ScanRamp::centered(300e6, 1e-3, 1e6);
        let a = scan_spectrum(&CavityConfig::bare(), &pdh, &ramp, 5).unwrap();
        let b = scan_spectrum(&CavityConfig::bare(), &pdh, &ramp, 5).unwrap();
        let c = scan_spectrum(&CavityConfig::bare(), &pdh, &ramp, 6).unwrap();
        assert_eq!(a.error.values, b.error.values);
        assert_ne!(a.error.values, c.error.values);
    }

    #[test]
    fn invalid_pdh_rejected() {
        let pdh = PdhConfig { modulation_frequency_omega: 0.0, ..PdhConfig::default() };
        assert!(PdhModel::new(&CavityConfig::bare(), &pdh).is_err());
        let pdh = PdhConfig { modulation_depth_beta: -0.1, ..PdhConfig::default() };
        assert!(PdhModel::new(&CavityConfig::bare(), &pdh).is_err());
    }

    proptest! {
        #[test]
        fn power_fractions_bounded(beta in 0.0f64..10.0) {
            let p = PdhConfig { modulation_depth_beta: beta, ..PdhConfig::default() };
            prop_assert!(p.carrier_power() + 2.0 * p.sideband_power() <= 1.0 + 1e-12);
        }

        #[test]
        fn error_is_odd(d in -400e6f64..400e6, beta in 0.05f64..1.5) {
            let p = PdhConfig { modulation_depth_beta: beta, ..PdhConfig::default() };
            let m = PdhModel::new(&CavityConfig::diamond(), &p).unwrap();
            let (a, b) = (m.error_signal(d), m.error_signal(-d));
            prop_assert!((a + b).abs() <= 1e-12 * (a.abs() + 1e-9));
        }
    }
}
