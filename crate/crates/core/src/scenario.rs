//! Named operating conditions and the end-to-end pipeline run for each:
//! scan the cavity, fit the scan, calibrate the error slope, lock against the
//! condition's vibration spectrum, and convert the locked error back to
//! length.

use serde::Serialize;

use crate::analysis::calibration::{calibrate_error_slope, error_to_displacement, ErrorCalibration};
use crate::analysis::scan_fit::{fit_scan, ScanFit, ScanFitOptions};
use crate::analysis::spectral::{compute_asd, Asd, WelchOptions};
use crate::cavity::{derive, CavityConfig, DerivedCavity};
use crate::error::{Error, Result};
use crate::io::config_hash;
use crate::pdh::{scan_spectrum, PdhConfig, ScanRamp};
use crate::plant::PlantConfig;
use crate::servo::{run_closed_loop, LockReport, LoopSetup, RunOptions, ServoConfig};
use crate::trace::Trace;
use crate::vibration::NoiseSpec;

/// Every shipped scenario: cavity × temperature × pulse-tube state, for the
/// conditions with a measured reference value.
pub const SCENARIO_NAMES: &[&str] = &[
    "bare-rt-pt-off",
    "bare-4k-pt-on",
    "bare-4k-pt-off",
    "bare-mk15-pt-on",
    "bare-mk15-pt-off",
    "diamond-rt-pt-off",
    "diamond-4k-pt-on",
    "diamond-4k-pt-off",
    "diamond-mk15-pt-on",
    "diamond-mk15-pt-off",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub cavity: String,
    pub noise: String,
    pub plant: String,
    pub servo: String,
    /// Measured rms length fluctuation under lock for this condition, pm.
    pub reference_rms_pm: f64,
}

impl Scenario {
    pub fn preset(name: &str) -> Result<Self> {
        let unknown = || Error::UnknownPreset(name.to_string());
        let (cavity, cell) = name.split_once('-').ok_or_else(unknown)?;
        let reference_rms_pm = match (cavity, cell) {
            ("bare", "rt-pt-off") => 23.5,
            ("bare", "4k-pt-on") => 31.6,
            ("bare", "4k-pt-off") => 19.8,
            ("bare", "mk15-pt-on") => 30.0,
            ("bare", "mk15-pt-off") => 19.9,
            ("diamond", "rt-pt-off") => 13.1,
            ("diamond", "4k-pt-on") => 46.0,
            ("diamond", "4k-pt-off") => 21.5,
            ("diamond", "mk15-pt-on") => 63.0,
            ("diamond", "mk15-pt-off") => 16.8,
            _ => return Err(unknown()),
        };
        let noise = if cavity == "diamond" { format!("{cell}-diamond") } else { cell.to_string() };
        Ok(Self {
            name: name.to_string(),
            cavity: cavity.to_string(),
            noise,
            plant: cavity.to_string(),
            servo: "tuned".to_string(),
            reference_rms_pm,
        })
    }

    /// Resolves the presets into a loop configuration and a noise spec.
    pub fn resolve(&self) -> Result<(LoopSetup, NoiseSpec)> {
        let cavity = CavityConfig::preset(&self.cavity)?;
        let plant = PlantConfig::preset(&self.plant)?;
        let pdh = PdhConfig::default();
        let servo = ServoConfig::preset(&self.servo, &cavity, &pdh, &plant)?;
        let noise = NoiseSpec::preset(&self.noise)?;
        let setup = LoopSetup { cavity, pdh, plant, servo };
        setup.validate()?;
        Ok((setup, noise))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOptions {
    pub duration_s: f64,
    pub seed: u64,
    pub record_every: usize,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            seed: 0,
            record_every: 20,
        }
    }
}

/// Scan-fit numbers carried into the report (per-peak detail omitted).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub finesse: f64,
    pub fsr_hz: f64,
    pub linewidth_hz: f64,
    pub axis_calibration_hz_per_s: f64,
    pub residual_norm: f64,
    pub converged: bool,
}

impl From<&ScanFit> for ScanSummary {
    fn from(f: &ScanFit) -> Self {
        Self {
            finesse: f.finesse,
            fsr_hz: f.fsr_hz,
            linewidth_hz: f.linewidth_hz,
            axis_calibration_hz_per_s: f.axis_calibration_hz_per_s,
            residual_norm: f.residual_norm,
            converged: f.converged,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub config_hash: String,
    pub created_by: &'static str,
    pub options: ScenarioOptions,
    pub derived: DerivedCavity,
    pub scan_fit: ScanSummary,
    pub error_calibration: ErrorCalibration,
    pub lock: LockReport,
    /// Residual rms recovered from the locked error signal alone, m.
    pub calibrated_residual_rms_m: f64,
    pub calibration_clipped_samples: usize,
    /// Band-limited true residual in pm, next to the reference value.
    pub residual_band_rms_pm: f64,
    pub reference_rms_pm: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub residual_displacement: Trace,
    pub calibrated_displacement: Trace,
    pub residual_error: Trace,
    pub residual_asd: Asd,
    pub transmission: Trace,
}

/// Scan ramp centred on a carrier, wide enough for both sidebands and their
/// Lorentzian skirts.
pub fn calibration_ramp(derived: &DerivedCavity, pdh: &PdhConfig) -> ScanRamp {
    let half = pdh.modulation_frequency_omega + 10.0 * derived.linewidth_fwhm;
    ScanRamp::centered(half, 0.01, 5e6)
}

pub fn run_scenario(scenario: &Scenario, options: &ScenarioOptions) -> Result<ScenarioRun> {
    let (setup, noise) = scenario.resolve()?;
    let derived = derive(&setup.cavity)?;

    let ramp = calibration_ramp(&derived, &setup.pdh);
    let scan = scan_spectrum(&setup.cavity, &setup.pdh, &ramp, options.seed)?;
    let fit = fit_scan(
        &scan.transmission,
        &ScanFitOptions {
            modulation_frequency_hz: Some(setup.pdh.modulation_frequency_omega),
            ramp_rate_hz_per_s: Some(ramp.rate_hz_per_s()),
            fsr_hz: Some(derived.fsr),
            ..ScanFitOptions::default()
        },
    )?;
    let calibration = calibrate_error_slope(&scan.error, &fit)?;

    let run_options = RunOptions {
        duration_s: options.duration_s,
        seed: options.seed,
        record_every: options.record_every,
        ..RunOptions::default()
    };
    let run = run_closed_loop(&setup, &noise, &run_options)?;
    let hash = config_hash(&(scenario, &setup, &noise, options));

    let residual = run.report.residual_displacement.clone();
    if residual.len() < 16 {
        return Err(Error::Analysis("lock interval too short to analyse".into()));
    }
    let converted = error_to_displacement(
        &run.report.residual_error,
        &calibration,
        fit.finesse,
        setup.cavity.wavelength_lambda,
    )?;
    let residual_asd = compute_asd(&residual, &WelchOptions::default())?;

    let stamp = |t: Trace| {
        t.with_meta("seed", options.seed)
            .with_meta("config_hash", &hash)
            .with_meta("created_by", crate::CREATED_BY)
            .with_meta("scenario", &scenario.name)
    };
    let report = ScenarioReport {
        scenario: scenario.clone(),
        seed: options.seed,
        config_hash: hash.clone(),
        created_by: crate::CREATED_BY,
        options: options.clone(),
        derived,
        scan_fit: ScanSummary::from(&fit),
        error_calibration: calibration,
        calibrated_residual_rms_m: converted.rms_m,
        calibration_clipped_samples: converted.clipped.len(),
        residual_band_rms_pm: run.report.band_rms_displacement * 1e12,
        reference_rms_pm: scenario.reference_rms_pm,
        lock: run.report.clone(),
    };
    Ok(ScenarioRun {
        residual_displacement: stamp(residual),
        calibrated_displacement: stamp(converted.trace),
        residual_error: stamp(run.report.residual_error.clone()),
        residual_asd,
        transmission: stamp(run.traces.transmission.clone()),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves() {
        for name in SCENARIO_NAMES {
            let s = Scenario::preset(name).unwrap();
            s.resolve().unwrap();
            assert_eq!(&s.name, name);
        }
        assert_eq!(SCENARIO_NAMES.len(), 10);
        assert!(Scenario::preset("bare-rt-pt-on").is_err());
        assert!(Scenario::preset("glass-4k-pt-on").is_err());
        assert!(Scenario::preset("bare").is_err());
    }

    #[test]
    fn diamond_uses_diamond_noise_and_plant() {
        let s = Scenario::preset("diamond-mk15-pt-on").unwrap();
        assert_eq!(s.noise, "mk15-pt-on-diamond");
        assert_eq!(s.plant, "diamond");
        let (setup, _) = s.resolve().unwrap();
        assert!(setup.plant.modes.iter().any(|m| (m.f0 - 6e3).abs() < 1.0));
    }

    #[test]
    fn short_run_is_deterministic() {
        let s = Scenario::preset("bare-mk15-pt-on").unwrap();
        let opts = ScenarioOptions { duration_s: 0.2, seed: 4, record_every: 20 };
        let a = run_scenario(&s, &opts).unwrap();
        let b = run_scenario(&s, &opts).unwrap();
        assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
        assert_eq!(a.residual_displacement.to_csv_string(), b.residual_displacement.to_csv_string());
        assert!(a.report.lock.lock_acquired);
        let ratio = a.report.calibrated_residual_rms_m / a.report.lock.rms_displacement;
        assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
    }
}
