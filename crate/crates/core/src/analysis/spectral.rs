//! Welch spectral estimation and band-limited rms.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            // Periodic Hann, the usual choice for spectral averaging.
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "hann" | "hanning" => Ok(Window::Hann),
            "rect" | "rectangular" | "boxcar" | "none" => Ok(Window::Rectangular),
            other => Err(Error::arg("window", format!("unknown window `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchOptions {
    pub window: Window,
    /// Samples per segment; derived from `segments` and `overlap` when absent.
    pub segment_length: Option<usize>,
    /// Fractional overlap between consecutive segments, in [0, 1).
    pub overlap: f64,
    /// Target number of averaged segments when `segment_length` is absent.
    pub segments: usize,
}

impl Default for WelchOptions {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            segment_length: None,
            overlap: 0.5,
            segments: 8,
        }
    }
}

impl WelchOptions {
    /// Segment length giving `segments` overlapping segments over `n` samples.
    pub fn resolve_segment_length(&self, n: usize) -> usize {
        self.segment_length.unwrap_or_else(|| {
            let span = 1.0 + (self.segments.max(1) - 1) as f64 * (1.0 - self.overlap);
            (n as f64 / span).floor() as usize
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asd {
    pub frequency_hz: Vec<f64>,
    /// One-sided amplitude spectral density, units/√Hz.
    pub asd: Vec<f64>,
    pub units: String,
    pub sample_rate_hz: f64,
    pub window: Window,
    pub segment_length: usize,
    pub overlap: f64,
    pub segments_averaged: usize,
    /// Bin spacing, Hz.
    pub resolution_hz: f64,
    /// ∫ASD² df divided by the trace variance.
    pub parseval_ratio: f64,
}

impl Asd {
    /// PSD summed over bins with f in [lo, hi].
    pub fn band_variance(&self, lo: f64, hi: f64) -> f64 {
        self.frequency_hz
            .iter()
            .zip(&self.asd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, a)| a * a * self.resolution_hz)
            .sum()
    }

    pub fn band_rms(&self, lo: f64, hi: f64) -> f64 {
        self.band_variance(lo, hi).sqrt()
    }

    /// Mean PSD over bins with f in [lo, hi), or None if the band is empty.
    pub fn mean_psd(&self, lo: f64, hi: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .frequency_hz
            .iter()
            .zip(&self.asd)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, a)| a * a)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("f_hz,asd\n");
        for (f, a) in self.frequency_hz.iter().zip(&self.asd) {
            s.push_str(&format!("{},{}\n", crate::trace::fmt_f64(*f), crate::trace::fmt_f64(*a)));
        }
        s
    }
}

/// Welch-averaged one-sided ASD with per-segment mean removal. The PSD
/// normalization is 2|X_k|² / (fs·Σw²) so that ∫PSD df equals the variance.
pub fn compute_asd(trace: &Trace, options: &WelchOptions) -> Result<Asd> {
    trace.validate()?;
    let n = trace.len();
    if !(0.0..1.0).contains(&options.overlap) {
        return Err(Error::arg("overlap", "must lie in [0, 1)"));
    }
    let len = options.resolve_segment_length(n);
    if len < 4 {
        return Err(Error::arg("segment_length", "segments must hold at least 4 samples"));
    }
    if len > n {
        return Err(Error::arg(
            "segment_length",
            format!("segment length {len} exceeds trace length {n}"),
        ));
    }
    let step = (((1.0 - options.overlap) * len as f64).round() as usize).max(1);
    let fs = trace.sample_rate_hz;
    let window = options.window.coefficients(len);
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(len);
    let bins = len / 2 + 1;
    let mut psd = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut count = 0usize;
    let mut start = 0usize;
    while start + len <= n {
        let seg = &trace.values[start..start + len];
        let mean = seg.iter().sum::<f64>() / len as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            let one_sided = if k == 0 || (len.is_multiple_of(2) && k == len / 2) { 1.0 } else { 2.0 };
            *p += one_sided * buf[k].norm_sqr() / (fs * w2);
        }
        count += 1;
        start += step;
    }
    for p in &mut psd {
        *p /= count as f64;
    }
    let df = fs / len as f64;
    let integral: f64 = psd.iter().sum::<f64>() * df;
    let variance = crate::trace::rms_about_mean(&trace.values).powi(2);
    Ok(Asd {
        frequency_hz: (0..bins).map(|k| k as f64 * df).collect(),
        asd: psd.into_iter().map(f64::sqrt).collect(),
        units: format!("{}/sqrt(Hz)", trace.units),
        sample_rate_hz: fs,
        window: options.window,
        segment_length: len,
        overlap: options.overlap,
        segments_averaged: count,
        resolution_hz: df,
        parseval_ratio: if variance > 0.0 { integral / variance } else { 1.0 },
    })
}

/// Rms of the mean-removed samples restricted to frequencies in [lo, hi],
/// from a single full-length FFT (exact Parseval split of the variance).
pub fn band_rms_of_samples(values: &[f64], sample_rate: f64, lo: f64, hi: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = sample_rate / n as f64;
    let mut total = 0.0;
    for (k, x) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let f = k as f64 * df;
        if f < lo || f > hi {
            continue;
        }
        let one_sided = if n.is_multiple_of(2) && k == n / 2 { 1.0 } else { 2.0 };
        total += one_sided * x.norm_sqr();
    }
    (total / (n as f64 * n as f64)).sqrt()
}

/// Rms of a trace, optionally restricted to a frequency band.
pub fn rms(trace: &Trace, band: Option<(f64, f64)>) -> Result<f64> {
    trace.validate()?;
    Ok(match band {
        None => trace.rms_about_mean(),
        Some((lo, hi)) => {
            if !(lo <= hi) {
                return Err(Error::arg("band", "lower edge above upper edge"));
            }
            band_rms_of_samples(&trace.values, trace.sample_rate_hz, lo, hi)
        }
    })
}

/// Reads an `f_hz,asd` table (as written by [`Asd::to_csv_string`]);
/// `#` comment lines are skipped.
pub fn parse_asd_table(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut f = Vec::new();
    let mut a = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("f_hz,asd") {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(x, y)| Some((x.trim().parse::<f64>().ok()?, y.trim().parse::<f64>().ok()?)));
        let (x, y) = parsed.ok_or_else(|| Error::Format(format!("line {}: expected `f_hz,asd`", lineno + 1)))?;
        if !(x.is_finite() && y.is_finite() && y >= 0.0) {
            return Err(Error::Format(format!("line {}: non-finite or negative entry", lineno + 1)));
        }
        if f.last().is_some_and(|last| x <= *last) {
            return Err(Error::Format(format!("line {}: frequencies must increase", lineno + 1)));
        }
        f.push(x);
        a.push(y);
    }
    if f.len() < 2 {
        return Err(Error::Format("ASD table needs at least two rows".into()));
    }
    Ok((f, a))
}

/// Rms from a uniformly spaced ASD table over bins with f in [lo, hi].
pub fn band_rms_of_table(f: &[f64], asd: &[f64], lo: f64, hi: f64) -> f64 {
    let df = (f[f.len() - 1] - f[0]) / (f.len() - 1) as f64;
    f.iter()
        .zip(asd)
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(_, a)| a * a * df)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn sine(a: f64, f0: f64, fs: f64, n: usize) -> Trace {
        Trace::new(fs, "m", (0..n).map(|i| a * (TAU * f0 * i as f64 / fs + 0.3).sin()).collect())
    }

    #[test]
    fn tone_power_in_band() {
        let (a, f0, fs) = (2.0, 123.0, 10_000.0);
        let t = sine(a, f0, fs, 200_000);
        let asd = compute_asd(&t, &WelchOptions::default()).unwrap();
        let p = asd.band_variance(f0 - 10.0, f0 + 10.0);
        assert!((p / (a * a / 2.0) - 1.0).abs() < 0.01, "{p}");
        assert!((asd.parseval_ratio - 1.0).abs() < 0.01);
        assert_eq!(asd.segments_averaged, 8);
    }

    #[test]
    fn white_noise_level() {
        let fs = 1000.0;
        let sigma = 0.5;
        let mut rng = SeededRng::new(4, 9);
        let t = Trace::new(fs, "V", (0..400_000).map(|_| sigma * rng.normal()).collect());
        let asd = compute_asd(&t, &WelchOptions { segment_length: Some(1024), ..Default::default() }).unwrap();
        let expected = (2.0 * sigma * sigma / fs).sqrt();
        let mean_psd = asd.mean_psd(10.0, 490.0).unwrap();
        let db = 10.0 * (mean_psd / (expected * expected)).log10();
        assert!(db.abs() < 1.0, "{db} dB");
    }

    #[test]
    fn band_rms_of_sine_is_amplitude_over_root_two() {
        let t = sine(3.0, 50.0, 1000.0, 10_000);
        let r = rms(&t, Some((40.0, 60.0))).unwrap();
        assert!((r - 3.0 / 2f64.sqrt()).abs() < 1e-9);
        assert!(rms(&t, Some((100.0, 200.0))).unwrap() < 1e-9);
        let full = rms(&t, None).unwrap();
        assert!((full - 3.0 / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn full_band_rms_equals_variance() {
        let mut rng = SeededRng::new(1, 1);
        let v: Vec<f64> = (0..1001).map(|_| rng.normal()).collect();
        let b = band_rms_of_samples(&v, 1.0, 0.0, 0.5);
        assert!((b - crate::trace::rms_about_mean(&v)).abs() < 1e-12);
    }

    #[test]
    fn too_short_rejected() {
        let t = Trace::new(10.0, "m", vec![0.0; 3]);
        assert!(compute_asd(&t, &WelchOptions::default()).is_err());
        let t = Trace::new(10.0, "m", vec![0.0; 100]);
        let o = WelchOptions { segment_length: Some(200), ..Default::default() };
        assert!(compute_asd(&t, &o).is_err());
    }

    #[test]
    fn window_names() {
        assert_eq!(Window::parse("Hann").unwrap(), Window::Hann);
        assert_eq!(Window::parse("rect").unwrap(), Window::Rectangular);
        assert!(Window::parse("kaiser").is_err());
    }

    #[test]
    fn asd_table_round_trip() {
        let mut rng = SeededRng::new(3, 0);
        let tr = Trace::new(1e3, "m", (0..8192).map(|_| rng.normal()).collect());
        let asd = compute_asd(&tr, &WelchOptions::default()).unwrap();
        let (f, a) = parse_asd_table(&format!("# units=m\n{}", asd.to_csv_string())).unwrap();
        assert_eq!(f.len(), asd.frequency_hz.len());
        let direct = asd.band_rms(10.0, 200.0);
        assert!((band_rms_of_table(&f, &a, 10.0, 200.0) / direct - 1.0).abs() < 1e-9);
        assert!(parse_asd_table("f_hz,asd\n1,2\n1,3\n").is_err());
    }
}
