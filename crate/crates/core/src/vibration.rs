//! Displacement-noise spectra and seeded time-domain synthesis.
//!
//! A [`NoiseSpec`] describes a one-sided amplitude spectral density as
//! contiguous power-law segments, a white floor, and Lorentzian peaks:
//!
//! ASD(f) = max(floor, segment(f)) + Σ peak_asd / (1 + (2Q(f − f0)/f0)²)
//!
//! Synthesis shapes the spectrum exactly in the frequency domain: every
//! positive-frequency bin gets magnitude ASD(f_k)·√(Δf/2) and a uniform
//! random phase, and an inverse FFT yields the trace.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, SeededRng, GENERATOR_ID};
use crate::trace::Trace;

/// ASD ∝ f^exponent on [f_lo, f_hi).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub f_lo: f64,
    pub f_hi: f64,
    pub asd_at_f_lo: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub f0: f64,
    pub peak_asd: f64,
    pub quality_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub segments: Vec<Segment>,
    pub peaks: Vec<Peak>,
    pub floor_asd: f64,
    pub seed: u64,
}

/// Upper edge of open-ended preset segments.
const OPEN_END_HZ: f64 = 1e9;

/// Preset names accepted by [`NoiseSpec::preset`].
pub const PRESET_NAMES: &[&str] = &[
    "rt-pt-off",
    "4k-pt-on",
    "4k-pt-off",
    "mk15-pt-on",
    "mk15-pt-off",
    "rt-pt-off-diamond",
    "4k-pt-on-diamond",
    "4k-pt-off-diamond",
    "mk15-pt-on-diamond",
    "mk15-pt-off-diamond",
    "absolute-ad-on",
    "absolute-ad-off",
];

impl NoiseSpec {
    /// Spectrum that is zero everywhere.
    pub fn silent() -> Self {
        Self {
            segments: Vec::new(),
            peaks: Vec::new(),
            floor_asd: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("floor_asd", self.floor_asd)?;
        if self.floor_asd < 0.0 {
            return Err(Error::InvalidConfig("floor_asd must be non-negative".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            for (name, v) in [
                ("segment f_lo", s.f_lo),
                ("segment f_hi", s.f_hi),
                ("segment asd_at_f_lo", s.asd_at_f_lo),
                ("segment exponent", s.exponent),
            ] {
                ensure_finite(name, v)?;
            }
            if s.f_lo <= 0.0 || s.f_hi <= s.f_lo {
                return Err(Error::InvalidConfig(format!(
                    "segment {i}: need 0 < f_lo < f_hi, got [{}, {})",
                    s.f_lo, s.f_hi
                )));
            }
            if s.asd_at_f_lo < 0.0 {
                return Err(Error::InvalidConfig(format!("segment {i}: negative ASD")));
            }
            if i > 0 {
                let prev = &self.segments[i - 1];
                if (prev.f_hi - s.f_lo).abs() > 1e-12 * s.f_lo {
                    return Err(Error::InvalidConfig(format!(
                        "segment {i} starts at {} but segment {} ends at {}",
                        s.f_lo,
                        i - 1,
                        prev.f_hi
                    )));
                }
            }
        }
        for (i, p) in self.peaks.iter().enumerate() {
            for (name, v) in [
                ("peak f0", p.f0),
                ("peak peak_asd", p.peak_asd),
                ("peak quality_q", p.quality_q),
            ] {
                ensure_finite(name, v)?;
            }
            if p.f0 <= 0.0 || p.quality_q <= 0.0 || p.peak_asd < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "peak {i}: need f0 > 0, Q > 0, peak_asd >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Model ASD without argument checks; frequencies outside every segment
    /// fall back to the floor.
    pub fn asd(&self, f: f64) -> f64 {
        let seg = self
            .segments
            .iter()
            .find(|s| f >= s.f_lo && f < s.f_hi)
            .map(|s| s.asd_at_f_lo * (f / s.f_lo).powf(s.exponent))
            .unwrap_or(0.0);
        let mut total = seg.max(self.floor_asd);
        for p in &self.peaks {
            let x = 2.0 * p.quality_q * (f - p.f0) / p.f0;
            total += p.peak_asd / (1.0 + x * x);
        }
        total
    }

    /// ∫ ASD(f)² df over [f_lo, f_hi], by Simpson's rule in log frequency
    /// between breakpoints of the model.
    pub fn band_variance(&self, f_lo: f64, f_hi: f64) -> f64 {
        if f_hi <= f_lo {
            return 0.0;
        }
        let start = f_lo.max(1e-9 * f_hi.max(1.0));
        let mut breaks = vec![start, f_hi];
        for s in &self.segments {
            breaks.push(s.f_lo);
            breaks.push(s.f_hi);
        }
        for p in &self.peaks {
            let hw = p.f0 / (2.0 * p.quality_q);
            for k in [0.0, 1.0, 3.0, 10.0, 30.0] {
                breaks.push(p.f0 - k * hw);
                breaks.push(p.f0 + k * hw);
            }
        }
        breaks.retain(|&b| b >= start && b <= f_hi);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let psd = |f: f64| {
            let a = self.asd(f);
            a * a
        };
        let mut total = 0.0;
        // Below the first positive breakpoint the model is flat at the floor.
        if f_lo < start {
            total += psd(start) * (start - f_lo.max(0.0));
        }
        for w in breaks.windows(2) {
            let (a, b) = (w[0].ln(), w[1].ln());
            let m = 256;
            let h = (b - a) / m as f64;
            let g = |u: f64| {
                let f = u.exp();
                psd(f) * f
            };
            let mut s = g(a) + g(b);
            for j in 1..m {
                let u = a + j as f64 * h;
                s += if j % 2 == 1 { 4.0 } else { 2.0 } * g(u);
            }
            total += s * h / 3.0;
        }
        total
    }

    pub fn band_rms(&self, f_lo: f64, f_hi: f64) -> f64 {
        self.band_variance(f_lo, f_hi).sqrt()
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (base, diamond) = match name.strip_suffix("-diamond") {
            Some(b) => (b, true),
            None => (name, false),
        };
        let mut spec = match base {
            "mk15-pt-on" => relative(5.6e-9, true),
            "4k-pt-on" => relative(5.4e-9, true),
            "mk15-pt-off" => relative(1.8e-9, false),
            "4k-pt-off" => relative(1.9e-9, false),
            "rt-pt-off" => relative(1.6e-9, false),
            "absolute-ad-on" if !diamond => absolute(1.2e-6),
            "absolute-ad-off" if !diamond => absolute(2.8e-6),
            _ => return Err(Error::UnknownPreset(name.to_string())),
        };
        if diamond {
            spec.peaks.push(Peak { f0: 11e3, peak_asd: 30e-12, quality_q: 25.0 });
            spec.peaks.push(Peak { f0: 20e3, peak_asd: 20e-12, quality_q: 30.0 });
        }
        Ok(spec)
    }
}

/// Rms over 0–100 Hz targeted by the relative-vibration presets.
pub const PRESET_CALIBRATION_BAND: (f64, f64) = (0.0, 100.0);

/// Relative (breadboard-to-plate) vibration: a strong low-frequency
/// component below 10 Hz, flat 0.1 nm/√Hz to ~900 Hz with beam-mode peaks,
/// f⁻² roll-off into a 7 pm/√Hz detection floor.
fn relative(band_rms_target: f64, pulse_tube: bool) -> NoiseSpec {
    let mid = 1e-10;
    let peak_scale = if pulse_tube { 1.0 } else { 0.3 };
    let shape = |a_low: f64| {
        let p_b = (mid / a_low).ln() / 5f64.ln();
        NoiseSpec {
            segments: vec![
                Segment { f_lo: 0.5, f_hi: 2.0, asd_at_f_lo: a_low, exponent: 0.0 },
                Segment { f_lo: 2.0, f_hi: 10.0, asd_at_f_lo: a_low, exponent: p_b },
                Segment { f_lo: 10.0, f_hi: 900.0, asd_at_f_lo: mid, exponent: 0.0 },
                Segment { f_lo: 900.0, f_hi: OPEN_END_HZ, asd_at_f_lo: mid, exponent: -2.0 },
            ],
            peaks: vec![
                Peak { f0: 140.0, peak_asd: 0.5e-9 * peak_scale, quality_q: 20.0 },
                Peak { f0: 320.0, peak_asd: 0.3e-9 * peak_scale, quality_q: 25.0 },
                Peak { f0: 560.0, peak_asd: 0.2e-9 * peak_scale, quality_q: 30.0 },
            ],
            floor_asd: 7e-12,
            seed: 0,
        }
    };
    let (lo, hi) = PRESET_CALIBRATION_BAND;
    let a = calibrate(|a| shape(a).band_rms(lo, hi), band_rms_target, mid, 1e-6);
    shape(a)
}

/// Absolute plate motion: flat to 10 Hz, then f⁻².
fn absolute(total_rms_target: f64) -> NoiseSpec {
    let shape = |a: f64| NoiseSpec {
        segments: vec![
            Segment { f_lo: 0.5, f_hi: 10.0, asd_at_f_lo: a, exponent: 0.0 },
            Segment { f_lo: 10.0, f_hi: OPEN_END_HZ, asd_at_f_lo: a, exponent: -2.0 },
        ],
        peaks: vec![Peak { f0: 1.4, peak_asd: 2.0 * a, quality_q: 10.0 }],
        floor_asd: 7e-12,
        seed: 0,
    };
    let a = calibrate(|a| shape(a).band_rms(0.0, 1e4), total_rms_target, 1e-12, 1e-3);
    shape(a)
}

/// Bisection on a monotone increasing level → rms map.
fn calibrate(rms_of: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if rms_of(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Evaluates the model ASD at `f` (> 0).
pub fn asd_model(spec: &NoiseSpec, f: f64) -> Result<f64> {
    spec.validate()?;
    ensure_finite("frequency", f)?;
    if f <= 0.0 {
        return Err(Error::arg("frequency", "must be positive"));
    }
    Ok(spec.asd(f))
}

/// Number of samples for a run of `duration` at `sample_rate`.
pub fn sample_count(duration: f64, sample_rate: f64) -> usize {
    (duration * sample_rate).round() as usize
}

/// Generates a displacement trace (metres) realizing `spec`, seeded by
/// `spec.seed`.
pub fn synthesize(spec: &NoiseSpec, duration: f64, sample_rate: f64) -> Result<Trace> {
    spec.validate()?;
    ensure_finite("duration", duration)?;
    ensure_finite("sample_rate", sample_rate)?;
    if duration <= 0.0 || sample_rate <= 0.0 {
        return Err(Error::arg("duration", "duration and sample rate must be positive"));
    }
    let n = sample_count(duration, sample_rate);
    if n < 2 {
        return Err(Error::arg("duration", "need at least two samples"));
    }
    let values = synthesize_samples(spec, n, sample_rate);
    Ok(Trace::new(sample_rate, "m", values)
        .with_meta("seed", spec.seed)
        .with_meta("generator", GENERATOR_ID))
}

fn synthesize_samples(spec: &NoiseSpec, n: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / n as f64;
    let mut rng = SeededRng::new(spec.seed, rng::stream::VIBRATION_PHASES);
    let mut bins = vec![Complex64::new(0.0, 0.0); n];
    // Positive frequencies strictly between DC and Nyquist.
    let k_max = n.div_ceil(2);
    let scale = (df / 2.0).sqrt();
    for k in 1..k_max {
        let mag = spec.asd(k as f64 * df) * scale;
        let phase = TAU * rng.uniform();
        let z = Complex64::from_polar(mag, phase);
        bins[k] = z;
        bins[n - k] = z.conj();
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut bins);
    bins.into_iter().map(|z| z.re).collect()
}

/// Variance a synthesized trace of `n` samples has by construction:
/// Σ ASD(f_k)²·Δf over the synthesized bins.
pub fn synthesized_variance(spec: &NoiseSpec, n: usize, sample_rate: f64) -> f64 {
    let df = sample_rate / n as f64;
    (1..n.div_ceil(2))
        .map(|k| spec.asd(k as f64 * df).powi(2) * df)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(a: f64) -> NoiseSpec {
        NoiseSpec {
            segments: vec![Segment { f_lo: 1e-3, f_hi: OPEN_END_HZ, asd_at_f_lo: a, exponent: 0.0 }],
            ..NoiseSpec::silent()
        }
    }

    #[test]
    fn mk15_level_at_10hz_and_floor() {
        let s = NoiseSpec::preset("mk15-pt-on").unwrap();
        assert!((asd_model(&s, 10.0).unwrap() - 1e-10).abs() < 0.05e-10);
        assert!((asd_model(&s, 1e6).unwrap() - 7e-12).abs() < 1e-15);
        assert!(asd_model(&s, 0.0).is_err());
    }

    #[test]
    fn power_law_ratio() {
        let s = NoiseSpec {
            segments: vec![Segment { f_lo: 1.0, f_hi: 1e6, asd_at_f_lo: 1e-6, exponent: -2.0 }],
            ..NoiseSpec::silent()
        };
        for f in [3.0, 50.0, 1e3] {
            let r = s.asd(2.0 * f) / s.asd(f);
            assert!((r - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_segments_is_floor() {
        let mut s = flat(1e-9);
        s.segments[0].f_lo = 10.0;
        s.segments[0].f_hi = 20.0;
        s.floor_asd = 3e-12;
        assert_eq!(s.asd(5.0), 3e-12);
        assert_eq!(s.asd(20.0), 3e-12);
        assert_eq!(s.asd(15.0), 1e-9);
    }

    #[test]
    fn presets_calibrated() {
        let s = NoiseSpec::preset("mk15-pt-on").unwrap();
        assert!((s.band_rms(0.0, 100.0) - 5.6e-9).abs() < 1e-12);
        let s = NoiseSpec::preset("absolute-ad-off").unwrap();
        assert!((s.band_rms(0.0, 1e4) / 2.8e-6 - 1.0).abs() < 1e-6);
        for name in PRESET_NAMES {
            NoiseSpec::preset(name).unwrap().validate().unwrap();
        }
        assert!(NoiseSpec::preset("absolute-ad-on-diamond").is_err());
        assert!(NoiseSpec::preset("nope").is_err());
    }

    #[test]
    fn band_variance_of_flat_spectrum() {
        let s = flat(2e-9);
        let v = s.band_variance(10.0, 1010.0);
        assert!((v / (4e-18 * 1000.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn band_variance_of_power_law() {
        // ∫_1^10 (f^-1)^2 df = 0.9
        let s = NoiseSpec {
            segments: vec![Segment { f_lo: 1.0, f_hi: 1e3, asd_at_f_lo: 1.0, exponent: -1.0 }],
            ..NoiseSpec::silent()
        };
        assert!((s.band_variance(1.0, 10.0) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn flat_spectrum_parseval() {
        let a = 1e-9;
        let fs = 20_000.0;
        let t = synthesize(&flat(a).with_seed(3), 2.0, fs).unwrap();
        let expected = a * (fs / 2.0).sqrt();
        let rms = t.rms_about_mean();
        assert!((rms / expected - 1.0).abs() < 0.05, "{rms} vs {expected}");
    }

    #[test]
    fn trace_variance_equals_bin_sum_exactly() {
        let s = NoiseSpec::preset("mk15-pt-on").unwrap().with_seed(11);
        let fs = 5000.0;
        let t = synthesize(&s, 4.0, fs).unwrap();
        let mean_sq: f64 = t.values.iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        let v = synthesized_variance(&s, t.len(), fs);
        assert!((mean_sq / v - 1.0).abs() < 1e-9);
        assert!(t.mean().abs() < 1e-20);
    }

    #[test]
    fn silent_spec_gives_zeros() {
        let t = synthesize(&NoiseSpec::silent(), 1.0, 1000.0).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn determinism_and_seed_dependence() {
        let s = NoiseSpec::preset("mk15-pt-off").unwrap();
        let a = synthesize(&s.clone().with_seed(1), 1.0, 10_000.0).unwrap();
        let b = synthesize(&s.clone().with_seed(1), 1.0, 10_000.0).unwrap();
        let c = synthesize(&s.with_seed(2), 1.0, 10_000.0).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
        // Same bin magnitudes, so same variance.
        assert!((a.rms_about_mean() / c.rms_about_mean() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = NoiseSpec::preset("mk15-pt-on").unwrap();
        s.segments[1].f_lo = 3.0;
        assert!(s.validate().is_err());
        let mut s = NoiseSpec::preset("mk15-pt-on").unwrap();
        s.floor_asd = f64::NAN;
        assert!(synthesize(&s, 1.0, 100.0).is_err());
        let s = NoiseSpec::preset("mk15-pt-on").unwrap();
        assert!(synthesize(&s, 0.01, 100.0).is_err());
    }

    #[test]
    fn odd_length_supported() {
        let t = synthesize(&flat(1e-9), 0.999, 1000.0).unwrap();
        assert_eq!(t.len(), 999);
    }

    proptest! {
        #[test]
        fn asd_never_below_floor(f in 1e-2f64..1e6, floor in 0.0f64..1e-9) {
            let mut s = NoiseSpec::preset("mk15-pt-on").unwrap();
            s.floor_asd = floor;
            prop_assert!(s.asd(f) >= floor);
        }

        #[test]
        fn synthesized_variance_matches_integral(seed in 0u64..1000) {
            let s = NoiseSpec::preset("mk15-pt-on").unwrap().with_seed(seed);
            let fs = 2000.0;
            let n = sample_count(8.0, fs);
            let discrete = synthesized_variance(&s, n, fs);
            let integral = s.band_variance(0.0, fs / 2.0);
            prop_assert!((discrete / integral - 1.0).abs() < 0.05);
        }
    }
}
