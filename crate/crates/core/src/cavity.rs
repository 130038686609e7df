//! Static optical model of a plano-concave Fabry-Perot cavity, optionally
//! containing a slab of high-index material (diamond) on the flat mirror.
//!
//! The flat mirror is mirror 2 (HR coating on the slab, or a bulk flat);
//! light enters through the curved top mirror, mirror 1.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::loss;
use crate::error::{ensure_finite, Error, Result};
use crate::SPEED_OF_LIGHT;

/// Geometric and optical parameters. Lengths in metres, the absorption
/// coefficient in cm⁻¹ (decadic), reflectivities as power fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityConfig {
    pub wavelength_lambda: f64,
    pub air_gap_length: f64,
    pub diamond_thickness_d: f64,
    pub refractive_index_n: f64,
    #[serde(rename = "mirror_reflectivity_R1")]
    pub mirror_reflectivity_r1: f64,
    #[serde(rename = "mirror_reflectivity_R2")]
    pub mirror_reflectivity_r2: f64,
    pub roc_top_mirror: f64,
    #[serde(rename = "coating_aperture_D")]
    pub coating_aperture_d: f64,
    #[serde(rename = "surface_roughness_Rq")]
    pub surface_roughness_rq: f64,
    pub absorption_alpha: f64,
    pub ar_residual_reflectivity: f64,
}

impl CavityConfig {
    /// Bare cavity: two R = 99 % mirrors 32.5 mm apart, no intracavity loss.
    pub fn bare() -> Self {
        Self {
            wavelength_lambda: 737e-9,
            air_gap_length: 32.5e-3,
            diamond_thickness_d: 0.0,
            refractive_index_n: 1.0,
            mirror_reflectivity_r1: 0.99,
            mirror_reflectivity_r2: 0.99,
            roc_top_mirror: 0.25,
            coating_aperture_d: 10e-3,
            surface_roughness_rq: 0.0,
            absorption_alpha: 0.0,
            ar_residual_reflectivity: 0.0,
        }
    }

    /// Diamond-integrated cavity. The 0.5 mm slab carries the flat HR
    /// mirror; the air gap is chosen so the optical length is 27.3 mm.
    pub fn diamond() -> Self {
        let d = 0.5e-3;
        let n = 2.4;
        Self {
            wavelength_lambda: 737e-9,
            air_gap_length: 27.3e-3 - n * d,
            diamond_thickness_d: d,
            refractive_index_n: n,
            mirror_reflectivity_r1: 0.99,
            mirror_reflectivity_r2: 0.99,
            roc_top_mirror: 0.25,
            coating_aperture_d: 3e-3,
            surface_roughness_rq: 1.5e-9,
            absorption_alpha: 0.15,
            ar_residual_reflectivity: 0.0025,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "bare" => Ok(Self::bare()),
            "diamond" => Ok(Self::diamond()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn geometric_length(&self) -> f64 {
        self.air_gap_length + self.diamond_thickness_d
    }

    pub fn optical_length(&self) -> f64 {
        self.air_gap_length + self.refractive_index_n * self.diamond_thickness_d
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("wavelength_lambda", self.wavelength_lambda),
            ("air_gap_length", self.air_gap_length),
            ("diamond_thickness_d", self.diamond_thickness_d),
            ("refractive_index_n", self.refractive_index_n),
            ("mirror_reflectivity_R1", self.mirror_reflectivity_r1),
            ("mirror_reflectivity_R2", self.mirror_reflectivity_r2),
            ("roc_top_mirror", self.roc_top_mirror),
            ("coating_aperture_D", self.coating_aperture_d),
            ("surface_roughness_Rq", self.surface_roughness_rq),
            ("absorption_alpha", self.absorption_alpha),
            ("ar_residual_reflectivity", self.ar_residual_reflectivity),
        ];
        for (name, v) in fields {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.wavelength_lambda <= 0.0 {
            return Err(Error::InvalidConfig("wavelength_lambda must be positive".into()));
        }
        for (name, r) in [
            ("mirror_reflectivity_R1", self.mirror_reflectivity_r1),
            ("mirror_reflectivity_R2", self.mirror_reflectivity_r2),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {r}")));
            }
        }
        if self.refractive_index_n < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "refractive_index_n must be >= 1, got {}",
                self.refractive_index_n
            )));
        }
        if self.ar_residual_reflectivity >= 0.5 {
            return Err(Error::InvalidConfig(
                "ar_residual_reflectivity must be below 0.5".into(),
            ));
        }
        let length = self.geometric_length();
        if length <= 0.0 {
            return Err(Error::InvalidConfig("cavity length must be positive".into()));
        }
        // Plano-concave stability: 0 < g = 1 - L/R <= 1.
        if self.roc_top_mirror <= 0.0 || length >= self.roc_top_mirror {
            return Err(Error::UnstableGeometry {
                length_m: length,
                roc_m: self.roc_top_mirror,
            });
        }
        Ok(())
    }
}

/// Quantities derived from a [`CavityConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedCavity {
    pub optical_length: f64,
    pub geometric_length: f64,
    pub fsr: f64,
    /// Exact Airy finesse of the lossy resonator.
    pub finesse: f64,
    /// 2π / round-trip loss, the small-loss approximation.
    pub finesse_small_loss: f64,
    pub linewidth_fwhm: f64,
    pub quality_factor: f64,
    pub beam_waist_w0: f64,
    pub mode_volume: f64,
    pub round_trip_loss_total: f64,
    /// Round-trip power loss excluding mirror transmission.
    pub intracavity_loss: f64,
    #[serde(rename = "linewidth_in_length_DeltaL")]
    pub linewidth_in_length: f64,
}

/// Gaussian waist at the flat mirror of a plano-concave resonator.
pub fn plano_concave_waist(wavelength: f64, length: f64, roc: f64) -> f64 {
    ((wavelength / PI) * (length * (roc - length)).sqrt()).sqrt()
}

/// Round-trip intracavity loss: scattering (twice), absorption, clipping,
/// and the residual reflection of the AR face (also crossed twice).
fn intracavity_loss(config: &CavityConfig, waist: f64) -> f64 {
    2.0 * loss::scattering_single_pass(
        config.surface_roughness_rq,
        config.wavelength_lambda,
        config.refractive_index_n,
    ) + loss::absorption_round_trip(
        config.absorption_alpha,
        config.diamond_thickness_d,
        loss::AbsorptionBase::Decadic,
    ) + loss::clipping(config.coating_aperture_d, waist)
        + loss::ar_residual_round_trip(config.ar_residual_reflectivity)
}

/// Airy finesse π√a / (1 − a) for round-trip amplitude factor `a`.
pub fn airy_finesse(round_trip_amplitude: f64) -> f64 {
    let a = round_trip_amplitude;
    PI * a.sqrt() / (1.0 - a)
}

pub fn derive(config: &CavityConfig) -> Result<DerivedCavity> {
    config.validate()?;
    let optical_length = config.optical_length();
    let geometric_length = config.geometric_length();
    let fsr = SPEED_OF_LIGHT / (2.0 * optical_length);
    let waist = plano_concave_waist(config.wavelength_lambda, geometric_length, config.roc_top_mirror);
    let mode_volume = PI * waist * waist * geometric_length / 4.0;

    let l_int = intracavity_loss(config, waist);
    if l_int >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "intracavity round-trip loss {l_int} leaves no circulating field"
        )));
    }
    let mirror = loss::mirror_round_trip(config.mirror_reflectivity_r1, config.mirror_reflectivity_r2);
    let round_trip_loss_total = mirror + l_int;

    let a = (config.mirror_reflectivity_r1 * config.mirror_reflectivity_r2).sqrt() * (1.0 - l_int).sqrt();
    let finesse = airy_finesse(a);
    let linewidth_fwhm = fsr / finesse;
    let optical_frequency = SPEED_OF_LIGHT / config.wavelength_lambda;

    Ok(DerivedCavity {
        optical_length,
        geometric_length,
        fsr,
        finesse,
        finesse_small_loss: 2.0 * PI / round_trip_loss_total,
        linewidth_fwhm,
        quality_factor: optical_frequency / linewidth_fwhm,
        beam_waist_w0: waist,
        mode_volume,
        round_trip_loss_total,
        intracavity_loss: l_int,
        linewidth_in_length: config.wavelength_lambda / (2.0 * finesse),
    })
}

/// Precomputed field response of the cavity, for repeated evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CavityResponse {
    r1: f64,
    r2: f64,
    /// Round-trip amplitude factor of the intracavity loss.
    g: f64,
    transmission_scale: f64,
    pub fsr: f64,
    pub wavelength: f64,
}

impl CavityResponse {
    pub fn new(config: &CavityConfig) -> Result<Self> {
        let derived = derive(config)?;
        let g = (1.0 - derived.intracavity_loss).sqrt();
        Ok(Self {
            r1: config.mirror_reflectivity_r1.sqrt(),
            r2: config.mirror_reflectivity_r2.sqrt(),
            g,
            transmission_scale: (1.0 - config.mirror_reflectivity_r1)
                * (1.0 - config.mirror_reflectivity_r2)
                * g,
            fsr: derived.fsr,
            wavelength: config.wavelength_lambda,
        })
    }

    /// Round-trip phase accumulated at a detuning from resonance.
    pub fn phase(&self, detuning_hz: f64) -> f64 {
        2.0 * PI * detuning_hz / self.fsr
    }

    /// Round-trip phase for a cavity length change (laser frequency fixed).
    pub fn phase_from_length(&self, length_offset_m: f64) -> f64 {
        4.0 * PI * length_offset_m / self.wavelength
    }

    /// Detuning produced by a length change: one FSR per λ/2.
    pub fn detuning_from_length(&self, length_offset_m: f64) -> f64 {
        self.fsr * 2.0 * length_offset_m / self.wavelength
    }

    /// Amplitude reflection for a unit phasor e^{iφ}.
    #[inline]
    pub fn reflection_phasor(&self, phasor: Complex64) -> Complex64 {
        let rt = phasor * (self.r2 * self.g);
        (rt - self.r1) / (Complex64::new(1.0, 0.0) - rt * self.r1)
    }

    /// dF/dφ for a unit phasor e^{iφ}.
    #[inline]
    pub fn reflection_phase_derivative(&self, phasor: Complex64) -> Complex64 {
        let den = Complex64::new(1.0, 0.0) - phasor * (self.r1 * self.r2 * self.g);
        Complex64::new(0.0, self.r2 * self.g * (1.0 - self.r1 * self.r1)) * phasor / (den * den)
    }

    /// Power transmission for a unit phasor e^{iφ}.
    #[inline]
    pub fn transmission_phasor(&self, phasor: Complex64) -> f64 {
        let den = Complex64::new(1.0, 0.0) - phasor * (self.r1 * self.r2 * self.g);
        self.transmission_scale / den.norm_sqr()
    }

    pub fn reflection(&self, detuning_hz: f64) -> Complex64 {
        self.reflection_phasor(Complex64::from_polar(1.0, self.phase(detuning_hz)))
    }

    pub fn transmission(&self, detuning_hz: f64) -> f64 {
        self.transmission_phasor(Complex64::from_polar(1.0, self.phase(detuning_hz)))
    }
}

/// Steady-state amplitude reflection at `detuning_hz` from the nearest resonance.
pub fn reflection_coefficient(config: &CavityConfig, detuning_hz: f64) -> Result<Complex64> {
    ensure_finite("detuning", detuning_hz)?;
    Ok(CavityResponse::new(config)?.reflection(detuning_hz))
}

/// Highest finesse whose linewidth-in-length λ/(2F) still exceeds the rms
/// length fluctuation.
pub fn max_lockable_finesse(delta_l_rms: f64, wavelength: f64) -> Result<f64> {
    ensure_finite("delta_l_rms", delta_l_rms)?;
    ensure_finite("wavelength", wavelength)?;
    if delta_l_rms <= 0.0 {
        return Err(Error::arg("delta_l_rms", "length fluctuation must be positive"));
    }
    if wavelength <= 0.0 {
        return Err(Error::arg("wavelength", "must be positive"));
    }
    Ok(wavelength / (2.0 * delta_l_rms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn bare_cavity_matches_table_values() {
        let d = derive(&CavityConfig::bare()).unwrap();
        assert!(rel(d.fsr, 4.6e9) < 0.01, "fsr {}", d.fsr);
        assert!(rel(d.finesse, 310.0) < 0.05, "finesse {}", d.finesse);
        assert!(rel(d.linewidth_fwhm, 15e6) < 0.10);
        assert!(rel(d.quality_factor, 2.7e7) < 0.10);
        assert!(rel(d.beam_waist_w0, 140e-6) < 0.02, "w0 {}", d.beam_waist_w0);
        assert!(rel(d.mode_volume, 0.50e-9) < 0.05, "V {}", d.mode_volume);
        assert!(rel(d.round_trip_loss_total, 0.02) < 1e-12);
    }

    #[test]
    fn diamond_cavity_matches_table_values() {
        let c = CavityConfig::diamond();
        assert!(rel(c.optical_length(), 27.3e-3) < 1e-12);
        let d = derive(&c).unwrap();
        assert!(rel(d.fsr, 5.5e9) < 0.01, "fsr {}", d.fsr);
        assert!(d.finesse > 90.0 * 0.95 && d.finesse < 93.0 * 1.05, "finesse {}", d.finesse);
        assert!(rel(d.linewidth_fwhm, 60e6) < 0.10, "lw {}", d.linewidth_fwhm);
        assert!(rel(d.quality_factor, 6.5e6) < 0.10, "Q {}", d.quality_factor);
        assert!(rel(d.beam_waist_w0, 135e-6) < 0.02, "w0 {}", d.beam_waist_w0);
        assert!(rel(d.mode_volume, 0.39e-9) < 0.05, "V {}", d.mode_volume);
    }

    #[test]
    fn linewidth_in_length_is_half_wavelength_over_finesse() {
        let c = CavityConfig::bare();
        let d = derive(&c).unwrap();
        assert_eq!(d.linewidth_in_length, c.wavelength_lambda / (2.0 * d.finesse));
        // ≈ 1.19 nm for F = 310 at 737 nm.
        assert!((737e-9_f64 / (2.0 * 310.0) - 1.19e-9).abs() < 0.005e-9);
    }

    #[test]
    fn unstable_geometry_rejected() {
        let mut c = CavityConfig::bare();
        c.air_gap_length = 0.3;
        assert!(matches!(derive(&c), Err(Error::UnstableGeometry { .. })));
    }

    #[test]
    fn invalid_reflectivity_rejected() {
        let mut c = CavityConfig::bare();
        c.mirror_reflectivity_r1 = 1.0;
        assert!(matches!(derive(&c), Err(Error::InvalidConfig(_))));
        c.mirror_reflectivity_r1 = f64::NAN;
        assert!(derive(&c).is_err());
    }

    #[test]
    fn lossless_limit_diverges() {
        let mut c = CavityConfig::bare();
        let mut last = 0.0;
        for r in [0.99, 0.999, 0.9999, 0.999_999] {
            c.mirror_reflectivity_r1 = r;
            c.mirror_reflectivity_r2 = r;
            let d = derive(&c).unwrap();
            assert!(d.finesse > last);
            last = d.finesse;
            assert!(d.round_trip_loss_total <= 2.0 * (1.0 - r) + 1e-15);
        }
        assert!(last > 1e6);
    }

    #[test]
    fn reflection_full_off_resonance_and_zero_when_matched() {
        let c = CavityConfig::bare();
        let resp = CavityResponse::new(&c).unwrap();
        // Lossless: reflected plus transmitted power is the incident power.
        for x in [0.0, 0.1, 0.37, 0.5] {
            let d = x * resp.fsr;
            assert!((resp.reflection(d).norm_sqr() + resp.transmission(d) - 1.0).abs() < 1e-12);
        }
        assert!((resp.reflection(resp.fsr / 2.0).norm() - 1.0).abs() < 1e-4);
        // Symmetric lossless is impedance matched.
        assert!(resp.reflection(0.0).norm() < 1e-12);
        // So is a lossy cavity whose input mirror balances R2 times the loss.
        let mut c = CavityConfig::diamond();
        let d = derive(&c).unwrap();
        c.mirror_reflectivity_r1 = c.mirror_reflectivity_r2 * (1.0 - d.intracavity_loss);
        let resp = CavityResponse::new(&c).unwrap();
        assert!(resp.reflection(0.0).norm() < 1e-12);
    }

    #[test]
    fn reflection_dip_half_depth_at_half_linewidth() {
        // Brute-force sweep of |F|^2 locating the FWHM of the reflection dip,
        // independent of the Airy closed form.
        for cfg in [CavityConfig::bare(), CavityConfig::diamond()] {
            let d = derive(&cfg).unwrap();
            let resp = CavityResponse::new(&cfg).unwrap();
            let floor = resp.reflection(0.0).norm_sqr();
            let top = resp.reflection(d.fsr / 2.0).norm_sqr();
            let half = 0.5 * (floor + top);
            let n = 400_000;
            let span = 3.0 * d.linewidth_fwhm;
            let mut lo = None;
            let mut hi = None;
            for i in 0..n {
                let x = -span + 2.0 * span * i as f64 / n as f64;
                let below = resp.reflection(x).norm_sqr() < half;
                if below && lo.is_none() {
                    lo = Some(x);
                }
                if below {
                    hi = Some(x);
                }
            }
            let fwhm = hi.unwrap() - lo.unwrap();
            assert!(rel(fwhm, d.fsr / d.finesse) < 0.01, "fwhm {fwhm} vs {}", d.linewidth_fwhm);
            // At δ = linewidth/2 the dip is at half depth.
            let at = resp.reflection(d.linewidth_fwhm / 2.0).norm_sqr();
            assert!((at - half).abs() < 0.01 * (top - floor));
        }
    }

    #[test]
    fn max_lockable_finesse_values() {
        let f30 = max_lockable_finesse(30e-12, 737e-9).unwrap();
        assert!(rel(f30, 1.2e4) < 0.03, "{f30}");
        let f63 = max_lockable_finesse(63e-12, 737e-9).unwrap();
        assert!(rel(f63, 5.8e3) < 0.03, "{f63}");
        assert_eq!(max_lockable_finesse(737e-9 / 2.0, 737e-9).unwrap(), 1.0);
        assert!(max_lockable_finesse(0.0, 737e-9).is_err());
        assert!(max_lockable_finesse(-1e-12, 737e-9).is_err());
    }

    #[test]
    fn json_field_names() {
        let v = serde_json::to_value(CavityConfig::diamond()).unwrap();
        for k in [
            "wavelength_lambda",
            "air_gap_length",
            "diamond_thickness_d",
            "refractive_index_n",
            "mirror_reflectivity_R1",
            "mirror_reflectivity_R2",
            "roc_top_mirror",
            "coating_aperture_D",
            "surface_roughness_Rq",
            "absorption_alpha",
            "ar_residual_reflectivity",
        ] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
    }

    fn arb_config() -> impl Strategy<Value = CavityConfig> {
        (
            0.9f64..0.9999,
            0.9f64..0.9999,
            5e-3f64..0.1,
            0.0f64..1e-3,
            1.0f64..3.0,
            0.0f64..0.3,
        )
            .prop_map(|(r1, r2, gap, d, n, alpha)| CavityConfig {
                air_gap_length: gap,
                diamond_thickness_d: d,
                refractive_index_n: n,
                mirror_reflectivity_r1: r1,
                mirror_reflectivity_r2: r2,
                absorption_alpha: alpha,
                ..CavityConfig::diamond()
            })
    }

    proptest! {
        #[test]
        fn fsr_times_round_trip_length_is_c(cfg in arb_config()) {
            let d = derive(&cfg).unwrap();
            prop_assert!((d.fsr * 2.0 * d.optical_length - SPEED_OF_LIGHT).abs() <= 1e-15 * SPEED_OF_LIGHT * 4.0);
        }

        #[test]
        fn airy_agrees_with_small_loss_form(cfg in arb_config(), r in 0.96f64..0.9999, alpha in 0.0f64..0.05) {
            let cfg = CavityConfig {
                mirror_reflectivity_r1: r,
                mirror_reflectivity_r2: r,
                absorption_alpha: alpha,
                ..cfg
            };
            let d = derive(&cfg).unwrap();
            prop_assume!(d.round_trip_loss_total < 0.1);
            prop_assert!(rel(d.finesse, d.finesse_small_loss) < 0.05);
        }

        #[test]
        fn reflection_is_passive(cfg in arb_config(), x in -0.5f64..0.5) {
            let resp = CavityResponse::new(&cfg).unwrap();
            prop_assert!(resp.reflection(x * resp.fsr).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn waist_and_volume_monotone_below_half_roc(l1 in 1e-3f64..0.124, dl in 1e-5f64..1e-3) {
            let roc = 0.25;
            let l2 = (l1 + dl).min(0.125);
            prop_assume!(l2 > l1);
            let w1 = plano_concave_waist(737e-9, l1, roc);
            let w2 = plano_concave_waist(737e-9, l2, roc);
            prop_assert!(w2 > w1);
            prop_assert!(w2 * w2 * l2 > w1 * w1 * l1);
        }
    }
}
