//! Argument definitions and one handler per subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cryolock::analysis::calibration::{calibrate_error_slope, error_to_displacement, ErrorCalibration};
use cryolock::analysis::interferometer::{interferometer_calibrate, interferometer_convert};
use cryolock::analysis::loss::{loss_budget_with, AbsorptionBase};
use cryolock::analysis::scan_fit::{fit_scan, ScanFit, ScanFitOptions};
use cryolock::analysis::spectral::{band_rms_of_table, compute_asd, parse_asd_table, rms, Window, WelchOptions};
use cryolock::cavity::{derive, max_lockable_finesse, CavityConfig};
use cryolock::io::{config_hash, write_atomic};
use cryolock::pdh::{scan_spectrum, PdhConfig, ScanRamp};
use cryolock::plant::PlantConfig;
use cryolock::scenario::{calibration_ramp, run_scenario, Scenario, ScenarioOptions, SCENARIO_NAMES};
use cryolock::servo::{bode_measure, log_spaced, run_closed_loop, BodeOptions, LoopModel, LoopSetup, RunOptions, ServoConfig};
use cryolock::trace::fmt_f64;
use cryolock::vibration::{synthesize, NoiseSpec};

use crate::output::{emit_json, emit_table, in_dir, load_config, provenance, read_json, read_trace, stamp, to_stdout, write_trace};
use crate::Failure;

#[derive(Parser)]
#[command(name = "cryolock", version, about = "Cryogenic optical cavity and PDH lock simulator")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derived cavity quantities (FSR, finesse, linewidth, waist, ...).
    Derive(DeriveArgs),
    /// Simulated transmission and PDH error traces for a detuning sweep.
    Scan(ScanArgs),
    /// Closed-loop lock simulation.
    Lock(LockArgs),
    /// Lorentzian fit of a transmission scan.
    FitScan(FitScanArgs),
    /// Tanh fit of the PDH error slope.
    CalibrateError(CalibrateErrorArgs),
    /// Converts an error trace to cavity length.
    Err2len(Err2lenArgs),
    /// Sinusoid fit of an interferometer fringe scan, with optional conversion.
    IfmCalib(IfmCalibArgs),
    /// Welch amplitude spectral density of a trace.
    Asd(AsdArgs),
    /// Rms of a trace or ASD table, optionally band-limited.
    Rms(RmsArgs),
    /// Swept-sine in-loop transfer function.
    Bode(BodeArgs),
    /// Round-trip loss budget, forward or from a measured finesse.
    LossBudget(LossBudgetArgs),
    /// Vibration trace synthesized from a noise spectrum.
    SynthNoise(SynthNoiseArgs),
    /// End-to-end run of a named operating condition.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct DeriveArgs {
    /// Cavity preset (`bare`, `diamond`) or JSON file.
    #[arg(long, default_value = "bare")]
    config: String,
    /// Rms length fluctuation, m; adds the highest finesse that still locks.
    #[arg(long)]
    delta_l_rms: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LoopConfigArgs {
    /// Cavity preset or JSON file.
    #[arg(long, default_value = "bare")]
    cavity: String,
    /// PDH JSON file; defaults to 150 MHz, β = 0.3.
    #[arg(long)]
    pdh: Option<PathBuf>,
    /// Plant preset (`bare`, `diamond`, `rigid`) or JSON file.
    #[arg(long, default_value = "bare")]
    plant: String,
    /// Servo preset (`tuned`, `open-loop`) or JSON file.
    #[arg(long, default_value = "tuned")]
    servo: String,
}

impl LoopConfigArgs {
    fn resolve(&self) -> Result<LoopSetup, Failure> {
        let cavity: CavityConfig = load_config(&self.cavity, CavityConfig::preset)?;
        let pdh: PdhConfig = match &self.pdh {
            Some(p) => read_json(p)?,
            None => PdhConfig::default(),
        };
        let plant: PlantConfig = load_config(&self.plant, PlantConfig::preset)?;
        let servo: ServoConfig = load_config(&self.servo, |name| ServoConfig::preset(name, &cavity, &pdh, &plant))?;
        let setup = LoopSetup { cavity, pdh, plant, servo };
        setup.validate()?;
        Ok(setup)
    }
}

#[derive(Args)]
struct ScanArgs {
    /// Cavity preset or JSON file.
    #[arg(long, default_value = "bare")]
    config: String,
    /// PDH JSON file.
    #[arg(long)]
    pdh: Option<PathBuf>,
    /// Ramp start detuning, Hz (default: carrier ± sidebands and skirts).
    #[arg(long, allow_hyphen_values = true)]
    start_hz: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    stop_hz: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    duration: f64,
    #[arg(long, default_value_t = 5e6)]
    sample_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (transmission.csv, error.csv, scan.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LockArgs {
    #[command(flatten)]
    setup: LoopConfigArgs,
    /// Noise preset or JSON file.
    #[arg(long, default_value = "mk15-pt-on")]
    noise: String,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep every n-th sample in the written traces.
    #[arg(long, default_value_t = 20)]
    record_every: usize,
    /// Also drive the cavity with the spectrum's white detection floor.
    #[arg(long)]
    include_floor: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitScanArgs {
    /// Transmission trace CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Sideband offset, Hz; 0 fits carriers only.
    #[arg(long, default_value_t = 150e6)]
    modulation_frequency: f64,
    /// Sweep rate, Hz/s (default: trace metadata).
    #[arg(long, allow_hyphen_values = true)]
    ramp_rate: Option<f64>,
    /// FSR to use when the scan holds a single carrier, Hz.
    #[arg(long)]
    fsr: Option<f64>,
    /// Carrier detection threshold, fraction of the trace range.
    #[arg(long, default_value_t = 0.5)]
    min_prominence: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateErrorArgs {
    /// Error trace CSV recorded alongside the fitted scan.
    #[arg(long)]
    trace: PathBuf,
    /// JSON written by `fit-scan`.
    #[arg(long)]
    scan_fit: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Err2lenArgs {
    #[arg(long)]
    trace: PathBuf,
    /// JSON written by `calibrate-error`.
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long)]
    finesse: f64,
    /// Laser wavelength, m.
    #[arg(long, default_value_t = 737e-9)]
    wavelength: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IfmCalibArgs {
    /// Fringe scan CSV spanning at least one fringe.
    #[arg(long)]
    trace: PathBuf,
    /// Optional signal CSV to convert with the fitted calibration.
    #[arg(long)]
    signal: Option<PathBuf>,
    #[arg(long, default_value_t = 737e-9)]
    wavelength: f64,
    /// Where to write the converted displacement (requires --signal).
    #[arg(long)]
    displacement_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Hann,
    Rectangular,
}

#[derive(Args)]
struct AsdArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "hann")]
    window: WindowArg,
    /// Samples per segment (default: from --segments and --overlap).
    #[arg(long)]
    segment_length: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, default_value_t = 8)]
    segments: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RmsArgs {
    /// Trace CSV.
    #[arg(long, conflicts_with = "asd", required_unless_present = "asd")]
    trace: Option<PathBuf>,
    /// ASD table CSV written by `asd`.
    #[arg(long)]
    asd: Option<PathBuf>,
    /// Band edges in Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    band: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BodeArgs {
    #[command(flatten)]
    setup: LoopConfigArgs,
    /// Noise preset or JSON file; noiseless if absent.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, default_value_t = 100.0)]
    f_min: f64,
    #[arg(long, default_value_t = 40e3)]
    f_max: f64,
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Injected tone amplitude at the piezo summing node, V.
    #[arg(long, default_value_t = 5e-3)]
    amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (bode.csv, bode.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    Decadic,
    Natural,
}

#[derive(Args)]
struct LossBudgetArgs {
    #[arg(long, default_value = "diamond")]
    config: String,
    /// Invert the budget from a measured finesse.
    #[arg(long)]
    measured_finesse: Option<f64>,
    #[arg(long, value_enum, default_value = "decadic")]
    absorption_base: BaseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthNoiseArgs {
    /// Noise preset or JSON file.
    #[arg(long, default_value = "mk15-pt-on")]
    noise: String,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 1e3)]
    sample_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario name, e.g. `bare-mk15-pt-on`.
    #[arg(long, required_unless_present = "list")]
    name: Option<String>,
    /// Print the available scenario names and exit.
    #[arg(long)]
    list: bool,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    record_every: usize,
    /// Output directory.
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Derive(a) => cmd_derive(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Lock(a) => cmd_lock(a),
        Command::FitScan(a) => cmd_fit_scan(a),
        Command::CalibrateError(a) => cmd_calibrate_error(a),
        Command::Err2len(a) => cmd_err2len(a),
        Command::IfmCalib(a) => cmd_ifm_calib(a),
        Command::Asd(a) => cmd_asd(a),
        Command::Rms(a) => cmd_rms(a),
        Command::Bode(a) => cmd_bode(a),
        Command::LossBudget(a) => cmd_loss_budget(a),
        Command::SynthNoise(a) => cmd_synth_noise(a),
        Command::Scenario(a) => cmd_scenario(a),
    }
}

/// Seed recorded on an input trace, if any.
fn trace_seed(meta: &BTreeMap<String, String>) -> u64 {
    meta.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn cmd_derive(a: DeriveArgs) -> Result<(), Failure> {
    let cfg: CavityConfig = load_config(&a.config, CavityConfig::preset)?;
    let derived = derive(&cfg)?;
    let max_lockable_finesse = match a.delta_l_rms {
        Some(dl) => Some(max_lockable_finesse(dl, cfg.wavelength_lambda)?),
        None => None,
    };
    #[derive(Serialize)]
    struct DeriveReport {
        #[serde(flatten)]
        derived: cryolock::cavity::DerivedCavity,
        #[serde(skip_serializing_if = "Option::is_none")]
        max_lockable_finesse: Option<f64>,
    }
    let hash = config_hash(&(&cfg, a.delta_l_rms));
    emit_json(a.out.as_deref(), &DeriveReport { derived, max_lockable_finesse }, a.seed, &hash)
}

fn cmd_scan(a: ScanArgs) -> Result<(), Failure> {
    let cfg: CavityConfig = load_config(&a.config, CavityConfig::preset)?;
    let pdh: PdhConfig = match &a.pdh {
        Some(p) => read_json(p)?,
        None => PdhConfig::default(),
    };
    let d = derive(&cfg)?;
    let default = calibration_ramp(&d, &pdh);
    let ramp = ScanRamp {
        start_hz: a.start_hz.unwrap_or(default.start_hz),
        stop_hz: a.stop_hz.unwrap_or(default.stop_hz),
        duration_s: a.duration,
        sample_rate_hz: a.sample_rate,
    };
    let scan = scan_spectrum(&cfg, &pdh, &ramp, a.seed)?;
    let hash = config_hash(&(&cfg, &pdh, &ramp));
    write_trace(&in_dir(&a.out, "transmission.csv"), &stamp(scan.transmission, a.seed, &hash))?;
    write_trace(&in_dir(&a.out, "error.csv"), &stamp(scan.error, a.seed, &hash))?;

    #[derive(Serialize)]
    struct ScanReport<'a> {
        ramp: &'a ScanRamp,
        covers_triplet: bool,
        warnings: &'a [String],
        fsr_hz: f64,
        linewidth_hz: f64,
    }
    let report = ScanReport {
        ramp: &ramp,
        covers_triplet: scan.covers_triplet,
        warnings: &scan.warnings,
        fsr_hz: d.fsr,
        linewidth_hz: d.linewidth_fwhm,
    };
    emit_json(Some(&in_dir(&a.out, "scan.json")), &report, a.seed, &hash)
}

fn cmd_lock(a: LockArgs) -> Result<(), Failure> {
    let setup = a.setup.resolve()?;
    let noise: NoiseSpec = load_config(&a.noise, NoiseSpec::preset)?;
    let opts = RunOptions {
        duration_s: a.duration,
        seed: a.seed,
        record_every: a.record_every,
        include_floor: a.include_floor,
        ..RunOptions::default()
    };
    let run = run_closed_loop(&setup, &noise, &opts)?;
    let hash = config_hash(&(&setup, &noise, &opts));
    let t = run.traces;
    for (name, trace) in [
        ("length_offset.csv", t.length_offset),
        ("disturbance.csv", t.disturbance),
        ("error.csv", t.error),
        ("control.csv", t.control),
        ("transmission.csv", t.transmission),
        ("state.csv", t.state),
        ("residual.csv", run.report.residual_displacement.clone()),
        ("residual_error.csv", run.report.residual_error.clone()),
    ] {
        write_trace(&in_dir(&a.out, name), &stamp(trace, a.seed, &hash))?;
    }
    emit_json(Some(&in_dir(&a.out, "report.json")), &run.report, a.seed, &hash)
}

fn cmd_fit_scan(a: FitScanArgs) -> Result<(), Failure> {
    let tr = read_trace(&a.trace)?;
    let opts = ScanFitOptions {
        modulation_frequency_hz: (a.modulation_frequency != 0.0).then_some(a.modulation_frequency),
        ramp_rate_hz_per_s: a.ramp_rate,
        fsr_hz: a.fsr,
        min_prominence: a.min_prominence,
    };
    let fit = fit_scan(&tr, &opts)?;
    let hash = config_hash(&(
        tr.metadata.get("config_hash"),
        a.modulation_frequency,
        a.ramp_rate,
        a.fsr,
        a.min_prominence,
    ));
    emit_json(a.out.as_deref(), &fit, trace_seed(&tr.metadata), &hash)
}

fn cmd_calibrate_error(a: CalibrateErrorArgs) -> Result<(), Failure> {
    let tr = read_trace(&a.trace)?;
    let fit: ScanFit = read_json(&a.scan_fit)?;
    let cal = calibrate_error_slope(&tr, &fit)?;
    let hash = config_hash(&(tr.metadata.get("config_hash"), &fit));
    emit_json(a.out.as_deref(), &cal, trace_seed(&tr.metadata), &hash)
}

fn cmd_err2len(a: Err2lenArgs) -> Result<(), Failure> {
    let tr = read_trace(&a.trace)?;
    let cal: ErrorCalibration = read_json(&a.calibration)?;
    let seed = trace_seed(&tr.metadata);
    let d = error_to_displacement(&tr, &cal, a.finesse, a.wavelength)?;
    let hash = config_hash(&(tr.metadata.get("config_hash"), &cal, a.finesse, a.wavelength));
    let out = stamp(d.trace, seed, &hash).with_meta("rms_m", fmt_f64(d.rms_m));
    write_trace(&a.out, &out)
}

fn cmd_ifm_calib(a: IfmCalibArgs) -> Result<(), Failure> {
    let fringe = read_trace(&a.trace)?;
    let fit = interferometer_calibrate(&fringe)?;
    let seed = trace_seed(&fringe.metadata);
    let hash = config_hash(&(fringe.metadata.get("config_hash"), a.wavelength));

    #[derive(Serialize)]
    struct IfmReport {
        #[serde(flatten)]
        fit: cryolock::analysis::interferometer::FringeFit,
        converted_rms_m: Option<f64>,
        clipped_samples: Option<usize>,
    }
    let mut report = IfmReport { fit, converted_rms_m: None, clipped_samples: None };
    match (&a.signal, &a.displacement_out) {
        (Some(sig), out) => {
            let signal = read_trace(sig)?;
            let d = interferometer_convert(&signal, &fit, a.wavelength)?;
            report.converted_rms_m = Some(d.rms_m);
            report.clipped_samples = Some(d.clipped.len());
            if let Some(path) = out {
                write_trace(path, &stamp(d.trace, seed, &hash))?;
            }
        }
        (None, Some(_)) => return Err(Failure::invalid("--displacement-out requires --signal")),
        (None, None) => {}
    }
    emit_json(a.out.as_deref(), &report, seed, &hash)
}

fn cmd_asd(a: AsdArgs) -> Result<(), Failure> {
    let tr = read_trace(&a.trace)?;
    let opts = WelchOptions {
        window: match a.window {
            WindowArg::Hann => Window::Hann,
            WindowArg::Rectangular => Window::Rectangular,
        },
        segment_length: a.segment_length,
        overlap: a.overlap,
        segments: a.segments,
    };
    let asd = compute_asd(&tr, &opts)?;
    let seed = trace_seed(&tr.metadata);
    let hash = config_hash(&(tr.metadata.get("config_hash"), &opts));
    let mut meta = provenance(seed, &hash);
    meta.insert("units".into(), asd.units.clone());
    meta.insert("window".into(), format!("{:?}", asd.window).to_lowercase());
    meta.insert("segment_length".into(), asd.segment_length.to_string());
    meta.insert("overlap".into(), fmt_f64(asd.overlap));
    meta.insert("segments_averaged".into(), asd.segments_averaged.to_string());
    meta.insert("resolution_hz".into(), fmt_f64(asd.resolution_hz));
    meta.insert("parseval_ratio".into(), fmt_f64(asd.parseval_ratio));
    emit_table(a.out.as_deref(), &meta, &asd.to_csv_string())
}

fn cmd_rms(a: RmsArgs) -> Result<(), Failure> {
    let band = a.band.as_ref().map(|b| (b[0], b[1]));
    #[derive(Serialize)]
    struct RmsReport {
        rms: f64,
        band_hz: Option<(f64, f64)>,
        source: &'static str,
    }
    let (value, seed, upstream, source) = match (&a.trace, &a.asd) {
        (Some(path), _) => {
            let tr = read_trace(path)?;
            (rms(&tr, band)?, trace_seed(&tr.metadata), tr.metadata.get("config_hash").cloned(), "trace")
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let (f, asd) = parse_asd_table(&text)?;
            let (lo, hi) = band.unwrap_or((f[0], f[f.len() - 1]));
            if !(lo <= hi) {
                return Err(Failure::invalid("band lower edge above upper edge"));
            }
            let meta: BTreeMap<String, String> = text
                .lines()
                .filter_map(|l| l.strip_prefix('#'))
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect();
            (band_rms_of_table(&f, &asd, lo, hi), trace_seed(&meta), meta.get("config_hash").cloned(), "asd")
        }
        (None, None) => return Err(Failure::invalid("one of --trace or --asd is required")),
    };
    let hash = config_hash(&(upstream, band));
    emit_json(a.out.as_deref(), &RmsReport { rms: value, band_hz: band, source }, seed, &hash)
}

fn cmd_bode(a: BodeArgs) -> Result<(), Failure> {
    let setup = a.setup.resolve()?;
    let noise: Option<NoiseSpec> = match &a.noise {
        Some(n) => Some(load_config(n, NoiseSpec::preset)?),
        None => None,
    };
    if a.points == 0 || !(a.f_min > 0.0 && a.f_max >= a.f_min) {
        return Err(Failure::invalid("need at least one point and 0 < f_min <= f_max"));
    }
    let freqs = log_spaced(a.f_min, a.f_max, a.points);
    let opts = BodeOptions { seed: a.seed, ..BodeOptions::default() };
    let points = bode_measure(&setup, noise.as_ref(), &freqs, a.amplitude, &opts)?;
    let model = LoopModel::new(&setup)?;
    let hash = config_hash(&(&setup, &noise, &freqs, a.amplitude, &opts));

    let mut body = String::from("f_hz,gain_db,phase_deg,model_gain_db,model_phase_deg,valid\n");
    for p in &points {
        let m = model.injection_response(p.f_hz);
        body.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(p.f_hz),
            fmt_f64(p.gain_db),
            fmt_f64(p.phase_deg),
            fmt_f64(20.0 * m.norm().log10()),
            fmt_f64(m.arg().to_degrees()),
            p.valid
        ));
    }
    emit_table(Some(&in_dir(&a.out, "bode.csv")), &provenance(a.seed, &hash), &body)?;
    #[derive(Serialize)]
    struct BodeReport<'a> {
        points: &'a [cryolock::servo::BodePoint],
        injection_amplitude_v: f64,
        options: &'a BodeOptions,
    }
    emit_json(
        Some(&in_dir(&a.out, "bode.json")),
        &BodeReport { points: &points, injection_amplitude_v: a.amplitude, options: &opts },
        a.seed,
        &hash,
    )
}

fn cmd_loss_budget(a: LossBudgetArgs) -> Result<(), Failure> {
    let cfg: CavityConfig = load_config(&a.config, CavityConfig::preset)?;
    let base = match a.absorption_base {
        BaseArg::Decadic => AbsorptionBase::Decadic,
        BaseArg::Natural => AbsorptionBase::Natural,
    };
    let budget = loss_budget_with(&cfg, a.measured_finesse, base)?;
    let hash = config_hash(&(&cfg, a.measured_finesse, base));
    emit_json(a.out.as_deref(), &budget, a.seed, &hash)
}

fn cmd_synth_noise(a: SynthNoiseArgs) -> Result<(), Failure> {
    let spec: NoiseSpec = load_config(&a.noise, NoiseSpec::preset)?;
    let spec = spec.with_seed(a.seed);
    let tr = synthesize(&spec, a.duration, a.sample_rate)?;
    let hash = config_hash(&(&spec, a.duration, a.sample_rate));
    write_trace(&a.out, &stamp(tr, a.seed, &hash))
}

fn cmd_scenario(a: ScenarioArgs) -> Result<(), Failure> {
    if a.list {
        let mut text = SCENARIO_NAMES.join("\n");
        text.push('\n');
        return Ok(to_stdout(&text)?);
    }
    let name = a.name.as_deref().expect("clap enforces --name");
    let out: &Path = a.out.as_deref().expect("clap enforces --out");
    let scenario = Scenario::preset(name)?;
    let opts = ScenarioOptions {
        duration_s: a.duration,
        seed: a.seed,
        record_every: a.record_every,
    };
    let run = run_scenario(&scenario, &opts)?;
    let hash = run.report.config_hash.clone();
    write_trace(&in_dir(out, "residual.csv"), &run.residual_displacement)?;
    write_trace(&in_dir(out, "residual_calibrated.csv"), &run.calibrated_displacement)?;
    write_trace(&in_dir(out, "residual_error.csv"), &run.residual_error)?;
    write_trace(&in_dir(out, "transmission.csv"), &run.transmission)?;
    let mut meta = provenance(a.seed, &hash);
    meta.insert("units".into(), "m/sqrt(Hz)".into());
    meta.insert("scenario".into(), scenario.name.clone());
    emit_table(Some(&in_dir(out, "residual_asd.csv")), &meta, &run.residual_asd.to_csv_string())?;
    let mut text = serde_json::to_string_pretty(&run.report)?;
    text.push('\n');
    write_atomic(&in_dir(out, "report.json"), text.as_bytes())?;
    Ok(())
}
