//! Uniformly sampled time series and their CSV file form.
//!
//! File layout: `# key=value` header lines (always `sample_rate_hz`,
//! `units`, `seed`, `created_by`, `config_hash`, plus any extra metadata),
//! a `t,value` column line, then one `t,value` row per sample with `t` in
//! seconds. Numbers are written with 17 significant digits so a read-back
//! reproduces every bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Relative tolerance between the declared sample rate and the time column.
const RATE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub sample_rate_hz: f64,
    /// Time of the first sample, seconds.
    pub t0: f64,
    pub units: String,
    pub values: Vec<f64>,
    /// Provenance and free-form header entries (`seed`, `config_hash`, ...).
    pub metadata: BTreeMap<String, String>,
}

impl Trace {
    pub fn new(sample_rate_hz: f64, units: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            sample_rate_hz,
            t0: 0.0,
            units: units.into(),
            values,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.sample_rate_hz
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate_hz
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Standard deviation about the mean.
    pub fn rms_about_mean(&self) -> f64 {
        rms_about_mean(&self.values)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Format(format!(
                "sample rate must be positive and finite, got {}",
                self.sample_rate_hz
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at sample {i}")));
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(48 * (self.values.len() + 8));
        let mut header = self.metadata.clone();
        header.insert("sample_rate_hz".into(), fmt_f64(self.sample_rate_hz));
        header.insert("units".into(), self.units.clone());
        header.entry("seed".into()).or_insert_with(|| "none".into());
        header
            .entry("created_by".into())
            .or_insert_with(|| crate::CREATED_BY.into());
        header
            .entry("config_hash".into())
            .or_insert_with(|| "none".into());
        for (k, v) in &header {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("t,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_f64(self.time(i)), fmt_f64(*v));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut metadata = BTreeMap::new();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if line.eq_ignore_ascii_case("t,value") {
                continue;
            }
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected `t,value`", lineno + 1)))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad time `{t}`", lineno + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad value `{v}`", lineno + 1)))?;
            times.push(t);
            values.push(v);
        }
        let rate: f64 = metadata
            .remove("sample_rate_hz")
            .ok_or_else(|| Error::Format("missing `# sample_rate_hz=` header".into()))?
            .parse()
            .map_err(|_| Error::Format("unparseable sample_rate_hz".into()))?;
        let units = metadata.remove("units").unwrap_or_default();
        if times.is_empty() {
            return Err(Error::Format("trace contains no samples".into()));
        }
        check_uniform(&times, rate)?;
        let trace = Trace {
            sample_rate_hz: rate,
            t0: times[0],
            units,
            values,
            metadata,
        };
        trace.validate()?;
        Ok(trace)
    }
}

/// Verifies a time column is monotone, uniform and consistent with `rate`.
pub fn check_uniform(times: &[f64], rate: f64) -> Result<()> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Format(format!("invalid sample rate {rate}")));
    }
    let dt = 1.0 / rate;
    for (i, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::Format(format!("time column not increasing at row {}", i + 1)));
        }
    }
    // Each timestamp must sit within 1 ppm (of its elapsed time) of the
    // position implied by the declared rate.
    let t0 = times[0];
    for (i, &t) in times.iter().enumerate().skip(1) {
        let elapsed = i as f64 * dt;
        if (t - t0 - elapsed).abs() > RATE_TOLERANCE * elapsed {
            return Err(Error::Format(format!(
                "non-uniform sampling: row {i} at t={t} expected {} for sample_rate_hz={rate}",
                t0 + elapsed
            )));
        }
    }
    Ok(())
}

/// Decimal form with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn rms_about_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}
