//! Round-trip optical loss budget, forward and inverted from a measured
//! finesse.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cavity::{plano_concave_waist, CavityConfig};
use crate::error::{ensure_finite, Error, Result};

/// Which exponential base the absorption coefficient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsorptionBase {
    /// Loss = 1 − 10^(−2dα).
    #[default]
    Decadic,
    /// Loss = 1 − e^(−2dα).
    Natural,
}

/// Total integrated scattering of one reflection off a rough surface
/// embedded in a medium of index `n`: S = (4π·Rq / (λ/n))².
pub fn scattering_single_pass(rq: f64, wavelength: f64, n: f64) -> f64 {
    let x = 4.0 * PI * rq * n / wavelength;
    x * x
}

/// Two-way absorption through a slab of thickness `d_m` (metres) with
/// coefficient `alpha_per_cm`.
pub fn absorption_round_trip(alpha_per_cm: f64, d_m: f64, base: AbsorptionBase) -> f64 {
    let exponent = 2.0 * d_m * 100.0 * alpha_per_cm;
    match base {
        AbsorptionBase::Decadic => 1.0 - 10f64.powf(-exponent),
        AbsorptionBase::Natural => -(-exponent).exp_m1(),
    }
}

/// Inverse of [`absorption_round_trip`]: coefficient in cm⁻¹ producing `loss`.
pub fn absorption_coefficient(loss: f64, d_m: f64, base: AbsorptionBase) -> f64 {
    let d_cm = d_m * 100.0;
    match base {
        AbsorptionBase::Decadic => -(1.0 - loss).log10() / (2.0 * d_cm),
        AbsorptionBase::Natural => -(-loss).ln_1p() / (2.0 * d_cm),
    }
}

/// Power outside a circular aperture of diameter `aperture` for a Gaussian
/// beam of waist `w0`.
pub fn clipping(aperture: f64, w0: f64) -> f64 {
    let x = aperture / (2.0 * w0);
    (-2.0 * x * x).exp()
}

pub fn mirror_round_trip(r1: f64, r2: f64) -> f64 {
    (1.0 - r1) + (1.0 - r2)
}

/// Residual reflection of the slab's AR face, met once in each direction.
pub fn ar_residual_round_trip(r_ar: f64) -> f64 {
    2.0 * r_ar
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    Forward,
    /// Absorption inferred from a measured finesse.
    Inverse,
    /// Known losses already exceed the measured total; no absorption inferred.
    OverExplained,
    /// No slab to attribute the residual loss to.
    NoAbsorber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub mode: BudgetMode,
    pub absorption_base: AbsorptionBase,
    pub mirror_loss: f64,
    pub scattering_single_pass: f64,
    pub scattering_roundtrip: f64,
    pub clipping: f64,
    pub absorption: f64,
    pub ar_residual: f64,
    pub total: f64,
    pub implied_finesse: f64,
    pub measured_finesse: Option<f64>,
    /// Absorption coefficient in cm⁻¹ explaining the measured finesse.
    pub implied_alpha: Option<f64>,
    /// Measured total minus all non-absorption terms (inverse mode).
    pub residual: Option<f64>,
}

pub fn loss_budget(config: &CavityConfig, measured_finesse: Option<f64>) -> Result<LossBudget> {
    loss_budget_with(config, measured_finesse, AbsorptionBase::Decadic)
}

pub fn loss_budget_with(
    config: &CavityConfig,
    measured_finesse: Option<f64>,
    base: AbsorptionBase,
) -> Result<LossBudget> {
    config.validate()?;
    let w0 = plano_concave_waist(
        config.wavelength_lambda,
        config.geometric_length(),
        config.roc_top_mirror,
    );
    let mirror_loss = mirror_round_trip(config.mirror_reflectivity_r1, config.mirror_reflectivity_r2);
    let s = scattering_single_pass(
        config.surface_roughness_rq,
        config.wavelength_lambda,
        config.refractive_index_n,
    );
    let scattering_roundtrip = 2.0 * s;
    let clip = clipping(config.coating_aperture_d, w0);
    let ar = ar_residual_round_trip(config.ar_residual_reflectivity);
    let known = mirror_loss + scattering_roundtrip + clip + ar;

    let Some(f_meas) = measured_finesse else {
        let absorption =
            absorption_round_trip(config.absorption_alpha, config.diamond_thickness_d, base);
        let total = known + absorption;
        return Ok(LossBudget {
            mode: BudgetMode::Forward,
            absorption_base: base,
            mirror_loss,
            scattering_single_pass: s,
            scattering_roundtrip,
            clipping: clip,
            absorption,
            ar_residual: ar,
            total,
            implied_finesse: 2.0 * PI / total,
            measured_finesse: None,
            implied_alpha: None,
            residual: None,
        });
    };

    ensure_finite("measured_finesse", f_meas)?;
    if f_meas <= 0.0 {
        return Err(Error::arg("measured_finesse", "must be positive"));
    }
    let total = 2.0 * PI / f_meas;
    let residual = total - known;
    let (mode, absorption, implied_alpha) = if residual < 0.0 {
        (BudgetMode::OverExplained, 0.0, None)
    } else if config.diamond_thickness_d <= 0.0 {
        (BudgetMode::NoAbsorber, residual, None)
    } else if residual >= 1.0 {
        return Err(Error::arg("measured_finesse", "implies a round-trip loss of 100 % or more"));
    } else {
        let alpha = absorption_coefficient(residual, config.diamond_thickness_d, base);
        (BudgetMode::Inverse, residual, Some(alpha))
    };
    Ok(LossBudget {
        mode,
        absorption_base: base,
        mirror_loss,
        scattering_single_pass: s,
        scattering_roundtrip,
        clipping: clip,
        absorption,
        ar_residual: ar,
        total: known + absorption,
        implied_finesse: 2.0 * PI / (known + absorption),
        measured_finesse: Some(f_meas),
        implied_alpha,
        residual: Some(residual),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scattering_from_roughness() {
        let s = scattering_single_pass(1.5e-9, 737e-9, 2.4);
        assert!((s - 0.0038).abs() < 0.0001, "{s}");
        let b = loss_budget(&CavityConfig::diamond(), None).unwrap();
        assert!((b.scattering_roundtrip - 0.0075).abs() < 0.00075);
        assert_eq!(scattering_single_pass(0.0, 737e-9, 2.4), 0.0);
    }

    #[test]
    fn absorption_closed_form() {
        let a = absorption_round_trip(0.15, 0.5e-3, AbsorptionBase::Decadic);
        assert!((a - (1.0 - 10f64.powf(-0.015))).abs() < 1e-15);
        assert!((a - 0.034).abs() < 0.034 * 0.05);
        let e = absorption_round_trip(0.15, 0.5e-3, AbsorptionBase::Natural);
        assert!((e - (1.0 - (-0.015f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn clipping_negligible_for_wide_aperture() {
        assert!(clipping(3e-3, 135e-6) < 1e-50);
        assert!((clipping(0.0, 135e-6) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diamond_forward_budget() {
        let b = loss_budget(&CavityConfig::diamond(), None).unwrap();
        assert_eq!(b.mode, BudgetMode::Forward);
        let sum = b.mirror_loss + b.scattering_roundtrip + b.clipping + b.absorption + b.ar_residual;
        assert!((b.total - sum).abs() < 1e-15);
        assert!((b.implied_finesse - 2.0 * PI / b.total).abs() < 1e-12);
        assert!((b.implied_finesse - 90.0).abs() < 0.15 * 90.0, "{}", b.implied_finesse);
    }

    #[test]
    fn inverse_from_finesse_90() {
        let b = loss_budget(&CavityConfig::diamond(), Some(90.0)).unwrap();
        assert_eq!(b.mode, BudgetMode::Inverse);
        let alpha = b.implied_alpha.unwrap();
        assert!((0.15..=0.19).contains(&alpha), "{alpha}");
    }

    #[test]
    fn over_explained_budget_omits_alpha() {
        let b = loss_budget(&CavityConfig::diamond(), Some(1000.0)).unwrap();
        assert_eq!(b.mode, BudgetMode::OverExplained);
        assert!(b.implied_alpha.is_none());
        assert!(b.residual.unwrap() < 0.0);
    }

    #[test]
    fn bare_cavity_has_no_absorber() {
        let b = loss_budget(&CavityConfig::bare(), Some(200.0)).unwrap();
        assert_eq!(b.mode, BudgetMode::NoAbsorber);
        assert!(b.implied_alpha.is_none());
    }

    #[test]
    fn invalid_measured_finesse_rejected() {
        assert!(loss_budget(&CavityConfig::diamond(), Some(0.0)).is_err());
        assert!(loss_budget(&CavityConfig::diamond(), Some(f64::NAN)).is_err());
    }

    proptest! {
        #[test]
        fn inverse_then_forward_reproduces_finesse(f in 60.0f64..95.0, natural in any::<bool>()) {
            let base = if natural { AbsorptionBase::Natural } else { AbsorptionBase::Decadic };
            let cfg = CavityConfig::diamond();
            let inv = loss_budget_with(&cfg, Some(f), base).unwrap();
            prop_assume!(inv.mode == BudgetMode::Inverse);
            let fwd_cfg = CavityConfig { absorption_alpha: inv.implied_alpha.unwrap(), ..cfg };
            let fwd = loss_budget_with(&fwd_cfg, None, base).unwrap();
            prop_assert!((fwd.implied_finesse - f).abs() < 0.01 * f);
        }

        #[test]
        fn total_decreases_with_each_parameter(
            which in 0usize..5,
            frac in 0.1f64..0.9,
        ) {
            let base = CavityConfig { coating_aperture_d: 0.6e-3, ..CavityConfig::diamond() };
            let mut lower = base.clone();
            match which {
                0 => lower.surface_roughness_rq *= frac,
                1 => lower.absorption_alpha *= frac,
                2 => lower.mirror_reflectivity_r1 = 1.0 - (1.0 - lower.mirror_reflectivity_r1) * frac,
                3 => lower.ar_residual_reflectivity *= frac,
                _ => lower.coating_aperture_d /= frac,
            }
            let a = loss_budget(&base, None).unwrap().total;
            let b = loss_budget(&lower, None).unwrap().total;
            prop_assert!(b < a);
        }
    }
}
