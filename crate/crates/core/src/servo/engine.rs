//! Closed-loop simulation at the servo sample rate.
//!
//! Each sample: the plant applies the previous controller command (plus any
//! injected test signal) and adds the disturbance; the PDH model turns the
//! resulting length offset into error and transmission; the state machine
//! decides between scanning and feedback and produces the next command.
//!
//! States: SCAN (triangle ramp) → ENGAGE once transmission crosses the
//! engage threshold (bumpless integrator load) → LOCKED after a run of
//! confirming samples; a debounced drop below the unlock threshold returns
//! to SCAN. With all gains zero the loop stays open (FREE_RUNNING).

use serde::Serialize;

use super::{LoopSetup, Pid};
use crate::analysis::spectral::band_rms_of_samples;
use crate::error::{ensure_finite, Error, Result};
use crate::pdh::PdhModel;
use crate::plant::{Plant, PlantState};
use crate::rng::{self, SeededRng};
use crate::trace::{rms_about_mean, Trace};
use crate::vibration::{self, NoiseSpec};

/// Band over which the headline residual rms is evaluated, Hz.
pub const RESIDUAL_BAND_HZ: [f64; 2] = [0.0, 10e3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopState {
    Scan,
    Engage,
    Locked,
    FreeRunning,
}

impl LoopState {
    /// Numeric code used in the state trace.
    pub fn code(self) -> f64 {
        match self {
            LoopState::Scan => 0.0,
            LoopState::Engage => 1.0,
            LoopState::Locked => 2.0,
            LoopState::FreeRunning => 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    pub duration_s: f64,
    pub seed: u64,
    /// Keep every n-th sample in the recorded traces.
    pub record_every: usize,
    /// Rate at which the disturbance is synthesized before interpolation.
    pub noise_sample_rate_hz: f64,
    /// Static cavity length offset at t = 0, metres.
    pub initial_length_offset_m: f64,
    /// Drive the cavity with the white floor of the noise spec as well.
    /// Off by default: the floor stands for the detection limit of the
    /// displacement measurement, not for motion of the mirrors.
    pub include_floor: bool,
}

impl RunOptions {
    /// Noise spec actually used as the length disturbance.
    pub fn disturbance_spec(&self, noise: &NoiseSpec) -> NoiseSpec {
        let mut spec = noise.clone().with_seed(self.seed);
        if !self.include_floor {
            spec.floor_asd = 0.0;
        }
        spec
    }
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            duration_s: 1.0,
            seed: 0,
            record_every: 20,
            noise_sample_rate_hz: 50e3,
            initial_length_offset_m: -60e-9,
            include_floor: false,
        }
    }
}

/// One engine sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// True cavity length offset, metres.
    pub length_offset: f64,
    pub disturbance: f64,
    pub error: f64,
    /// Voltage applied to the piezo this sample.
    pub applied_voltage: f64,
    /// Command computed this sample (applied on the next one).
    pub command: f64,
    /// Transmission normalized to the on-resonance peak.
    pub transmission: f64,
    pub state: LoopState,
    pub saturated: bool,
}

/// Disturbance synthesized at a lower rate, linearly interpolated and
/// repeated periodically.
#[derive(Debug, Clone)]
struct Disturbance {
    values: Vec<f64>,
    rate: f64,
    offset: f64,
}

impl Disturbance {
    #[inline]
    fn at(&self, t: f64) -> f64 {
        if self.values.is_empty() {
            return self.offset;
        }
        let x = t * self.rate;
        let i = x.floor();
        let frac = x - i;
        let n = self.values.len();
        let i0 = (i as usize) % n;
        let i1 = (i0 + 1) % n;
        self.offset + self.values[i0] * (1.0 - frac) + self.values[i1] * frac
    }
}

pub struct Engine {
    setup: LoopSetup,
    pdh: PdhModel,
    plant: Plant,
    plant_state: PlantState,
    pid: Pid,
    state: LoopState,
    dt: f64,
    peak_transmission: f64,
    /// Last controller command.
    command: f64,
    /// Command plus injection, applied to the plant on the next sample.
    drive: f64,
    n: u64,
    above: u32,
    below: u32,
    ramp_t0: f64,
    disturbance: Disturbance,
    detector: SeededRng,
    pub saturation_events: u64,
    pub unlock_events: u64,
    pub first_lock_time: Option<f64>,
    pub locked_samples: u64,
}

/// Triangle of unit amplitude starting at 0 and rising, period 1.
fn triangle(phase: f64) -> f64 {
    let p = phase - phase.floor();
    if p < 0.25 {
        4.0 * p
    } else if p < 0.75 {
        2.0 - 4.0 * p
    } else {
        4.0 * p - 4.0
    }
}

/// Rising-edge phase at which the unit triangle equals `v` ∈ [−1, 1].
fn triangle_phase_of(v: f64) -> f64 {
    let v = v.clamp(-1.0, 1.0);
    if v >= 0.0 {
        v / 4.0
    } else {
        1.0 + v / 4.0
    }
}

impl Engine {
    /// Engine in its start-up state (SCAN, or FREE_RUNNING for zero gains)
    /// driven by `disturbance` sampled at `disturbance_rate`.
    fn build(
        setup: &LoopSetup,
        disturbance: Vec<f64>,
        disturbance_rate: f64,
        offset: f64,
        seed: u64,
    ) -> Result<Self> {
        setup.validate()?;
        let servo = &setup.servo;
        let dt = servo.dt();
        let mut plant_cfg = setup.plant.clone();
        // One sample of latency is structural (command computed now, applied
        // next sample); the plant delay line supplies the rest.
        plant_cfg.loop_delay = (setup.delay_samples() - 1) as f64 * dt;
        let plant = Plant::new(&plant_cfg, dt)?;
        let pdh = PdhModel::new(&setup.cavity, &setup.pdh)?;
        let plant_state = plant.initial_state();
        let state = if servo.is_open_loop() { LoopState::FreeRunning } else { LoopState::Scan };
        Ok(Self {
            pid: Pid::new(servo.kp, servo.ki, servo.kd, dt, servo.integrator_clamp, servo.output_limits),
            setup: setup.clone(),
            peak_transmission: pdh.peak_transmission(),
            pdh,
            plant,
            plant_state,
            state,
            dt,
            command: 0.0,
            drive: 0.0,
            n: 0,
            above: 0,
            below: 0,
            ramp_t0: 0.0,
            disturbance: Disturbance { values: disturbance, rate: disturbance_rate, offset },
            detector: SeededRng::new(seed, rng::stream::DETECTOR_NOISE),
            saturation_events: 0,
            unlock_events: 0,
            first_lock_time: None,
            locked_samples: 0,
        })
    }

    /// Engine with a synthesized disturbance, ready to acquire lock.
    pub fn new(setup: &LoopSetup, noise: &NoiseSpec, options: &RunOptions) -> Result<Self> {
        let disturbance = synthesize_disturbance(noise, options)?;
        Self::build(
            setup,
            disturbance,
            options.noise_sample_rate_hz,
            options.initial_length_offset_m,
            options.seed,
        )
    }

    /// Engine already LOCKED on resonance at rest (zero offset, zero command),
    /// optionally with a disturbance.
    pub fn new_locked(setup: &LoopSetup, noise: Option<&NoiseSpec>, options: &RunOptions) -> Result<Self> {
        let disturbance = match noise {
            Some(spec) => synthesize_disturbance(spec, options)?,
            None => Vec::new(),
        };
        let mut e = Self::build(setup, disturbance, options.noise_sample_rate_hz, 0.0, options.seed)?;
        if setup.servo.is_open_loop() {
            return Err(Error::arg("servo", "a locked engine needs non-zero gains"));
        }
        e.state = LoopState::Locked;
        e.pid.engage(0.0, 0.0);
        e.first_lock_time = Some(0.0);
        Ok(e)
    }

    pub fn state(&self) -> LoopState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn pdh(&self) -> &PdhModel {
        &self.pdh
    }

    fn ramp(&self, t: f64) -> f64 {
        let r = &self.setup.servo.scan_ramp;
        r.amplitude * triangle(r.frequency * (t - self.ramp_t0))
    }

    fn start_scan(&mut self, t: f64, from_voltage: f64) {
        let r = &self.setup.servo.scan_ramp;
        let p = if r.amplitude > 0.0 { triangle_phase_of(from_voltage / r.amplitude) } else { 0.0 };
        self.ramp_t0 = t - p / r.frequency;
        self.state = LoopState::Scan;
        self.above = 0;
        self.below = 0;
    }

    /// Advances one sample. `injection` volts are summed with this sample's
    /// command, so both reach the piezo after the same loop delay.
    #[inline]
    pub fn step(&mut self, injection: f64) -> StepRecord {
        let t = self.time();
        let disturbance = self.disturbance.at(t);
        let out = self.plant.step_unchecked(&mut self.plant_state, self.drive, disturbance);
        let sample = self.pdh.at_length(out.length_offset);
        let noise_rms = self.setup.pdh.detector_noise_rms;
        let error = if noise_rms > 0.0 {
            sample.error + noise_rms * self.detector.normal()
        } else {
            sample.error
        };
        let transmission = sample.transmission / self.peak_transmission;
        let servo = &self.setup.servo;
        let mut saturated = out.saturated;

        let command = match self.state {
            LoopState::FreeRunning => 0.0,
            LoopState::Scan => {
                if transmission >= servo.lock_engage_threshold {
                    self.state = LoopState::Engage;
                    self.above = 1;
                    self.below = 0;
                    self.pid.engage(self.command, -error);
                    let (u, sat) = self.pid.update(-error);
                    saturated |= sat;
                    u
                } else {
                    self.ramp(t + self.dt)
                }
            }
            LoopState::Engage | LoopState::Locked => {
                let (u, sat) = self.pid.update(-error);
                saturated |= sat;
                if transmission < servo.unlock_threshold {
                    self.below += 1;
                } else {
                    self.below = 0;
                }
                if self.state == LoopState::Engage {
                    if transmission >= servo.lock_engage_threshold {
                        self.above += 1;
                    } else {
                        self.above = 0;
                    }
                    if self.above >= servo.lock_confirm_samples {
                        self.state = LoopState::Locked;
                        self.first_lock_time.get_or_insert(t);
                    }
                }
                if self.below >= servo.unlock_debounce_samples {
                    if self.state == LoopState::Locked {
                        self.unlock_events += 1;
                    }
                    self.start_scan(t + self.dt, u);
                    self.ramp(t + self.dt)
                } else {
                    u
                }
            }
        };
        if saturated {
            self.saturation_events += 1;
        }
        if self.state == LoopState::Locked {
            self.locked_samples += 1;
        }
        self.command = command;
        self.drive = command + injection;
        self.n += 1;
        StepRecord {
            t,
            length_offset: out.length_offset,
            disturbance,
            error,
            applied_voltage: out.applied_voltage,
            command,
            transmission,
            state: self.state,
            saturated,
        }
    }
}

fn synthesize_disturbance(noise: &NoiseSpec, options: &RunOptions) -> Result<Vec<f64>> {
    ensure_finite("noise_sample_rate_hz", options.noise_sample_rate_hz)?;
    if options.noise_sample_rate_hz <= 0.0 {
        return Err(Error::arg("noise_sample_rate_hz", "must be positive"));
    }
    let n = (options.duration_s * options.noise_sample_rate_hz).ceil() as usize + 1;
    let spec = options.disturbance_spec(noise);
    let duration = n.max(2) as f64 / options.noise_sample_rate_hz;
    Ok(vibration::synthesize(&spec, duration, options.noise_sample_rate_hz)?.values)
}

/// Headline numbers of a closed-loop run.
#[derive(Debug, Clone, Serialize)]
pub struct LockReport {
    pub lock_acquired: bool,
    /// Time of first entry into LOCKED, s.
    pub time_to_lock: Option<f64>,
    pub locked_fraction: f64,
    /// Rms of the residual displacement about its mean, m.
    pub rms_displacement: f64,
    /// Same residual restricted to [`RESIDUAL_BAND_HZ`], m.
    pub band_rms_displacement: f64,
    pub residual_band_hz: [f64; 2],
    /// Span of the analysed (longest locked) interval, s.
    pub residual_interval_s: [f64; 2],
    /// Rms of the disturbance over the same interval, m.
    pub free_running_rms: f64,
    pub saturation_events: u64,
    pub unlock_events: u64,
    pub duration_s: f64,
    pub sample_rate_fs: f64,
    pub record_rate_hz: f64,
    pub seed: u64,
    pub discriminant_slope_v_per_m: f64,
    #[serde(skip)]
    pub residual_error: Trace,
    #[serde(skip)]
    pub residual_displacement: Trace,
}

/// Full-run recorded traces, decimated by `record_every`.
#[derive(Debug, Clone)]
pub struct LockTraces {
    pub length_offset: Trace,
    pub disturbance: Trace,
    pub error: Trace,
    pub control: Trace,
    pub transmission: Trace,
    pub state: Trace,
}

#[derive(Debug, Clone)]
pub struct LockRun {
    pub report: LockReport,
    pub traces: LockTraces,
}

/// Distance from the nearest resonance (length offsets repeat every λ/2).
pub fn wrap_to_resonance(length_offset: f64, wavelength: f64) -> f64 {
    let half = wavelength / 2.0;
    length_offset - (length_offset / half).round() * half
}

/// Longest run of `true`, as [start, end).
fn longest_run(flags: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// Simulates acquisition and locking for `options.duration_s`.
pub fn run_closed_loop(setup: &LoopSetup, noise: &NoiseSpec, options: &RunOptions) -> Result<LockRun> {
    ensure_finite("duration_s", options.duration_s)?;
    let fs = setup.servo.sample_rate_fs;
    if options.duration_s < 10.0 / fs {
        return Err(Error::arg("duration_s", "must cover at least 10 servo samples"));
    }
    if options.record_every == 0 {
        return Err(Error::arg("record_every", "must be at least 1"));
    }
    let mut engine = Engine::new(setup, noise, options)?;
    let total = (options.duration_s * fs).round() as u64;
    let keep = options.record_every as u64;
    let cap = (total / keep + 1) as usize;
    let mut rec_len = Vec::with_capacity(cap);
    let mut rec_dist = Vec::with_capacity(cap);
    let mut rec_err = Vec::with_capacity(cap);
    let mut rec_ctl = Vec::with_capacity(cap);
    let mut rec_tr = Vec::with_capacity(cap);
    let mut rec_state = Vec::with_capacity(cap);
    for n in 0..total {
        let r = engine.step(0.0);
        if n % keep == 0 {
            rec_len.push(r.length_offset);
            rec_dist.push(r.disturbance - options.initial_length_offset_m);
            rec_err.push(r.error);
            rec_ctl.push(r.applied_voltage);
            rec_tr.push(r.transmission);
            rec_state.push(r.state);
        }
    }

    let record_rate = fs / keep as f64;
    let wavelength = setup.cavity.wavelength_lambda;
    let locked: Vec<bool> = rec_state.iter().map(|s| *s == LoopState::Locked).collect();
    let (range, lock_acquired) = match longest_run(&locked) {
        Some(r) => (r, true),
        None => ((0, rec_len.len()), false),
    };
    let residual: Vec<f64> = if lock_acquired {
        rec_len[range.0..range.1].iter().map(|&x| wrap_to_resonance(x, wavelength)).collect()
    } else {
        rec_len.clone()
    };
    let residual_error = rec_err[range.0..range.1].to_vec();
    let band_hi = RESIDUAL_BAND_HZ[1].min(record_rate / 2.0);
    let t_start = range.0 as f64 / record_rate;

    let tag = |t: Trace| t.with_meta("seed", options.seed);
    let mut residual_displacement = tag(Trace::new(record_rate, "m", residual));
    residual_displacement.t0 = t_start;
    let mut residual_error = tag(Trace::new(record_rate, "V", residual_error));
    residual_error.t0 = t_start;

    let report = LockReport {
        lock_acquired,
        time_to_lock: engine.first_lock_time,
        locked_fraction: engine.locked_samples as f64 / total as f64,
        rms_displacement: residual_displacement.rms_about_mean(),
        band_rms_displacement: band_rms_of_samples(
            &residual_displacement.values,
            record_rate,
            RESIDUAL_BAND_HZ[0],
            band_hi,
        ),
        residual_band_hz: [RESIDUAL_BAND_HZ[0], band_hi],
        residual_interval_s: [t_start, range.1 as f64 / record_rate],
        free_running_rms: rms_about_mean(&rec_dist[range.0..range.1]),
        saturation_events: engine.saturation_events,
        unlock_events: engine.unlock_events,
        duration_s: total as f64 / fs,
        sample_rate_fs: fs,
        record_rate_hz: record_rate,
        seed: options.seed,
        discriminant_slope_v_per_m: engine.pdh().slope_per_meter(),
        residual_error,
        residual_displacement,
    };
    let traces = LockTraces {
        length_offset: tag(Trace::new(record_rate, "m", rec_len)),
        disturbance: tag(Trace::new(record_rate, "m", rec_dist)),
        error: tag(Trace::new(record_rate, "V", rec_err)),
        control: tag(Trace::new(record_rate, "V", rec_ctl)),
        transmission: tag(Trace::new(record_rate, "normalized_power", rec_tr)),
        state: tag(Trace::new(record_rate, "state_code", rec_state.iter().map(|s| s.code()).collect())),
    };
    Ok(LockRun { report, traces })
}
