//! Bessel functions of the first kind for the modulation sideband weights.

/// J_n(x) by its power series. Accurate to ~1e-15 for |x| <= 12, which
/// covers any practical phase-modulation depth.
pub fn bessel_j(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=order {
        term *= half / k as f64;
    }
    let q = -half * half;
    let mut sum = term;
    for k in 1..200u32 {
        term *= q / (k as f64 * (k + order) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j(1, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // Abramowitz & Stegun table 9.1.
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j0(5.0) + 0.177_596_771_314_338_3).abs() < 1e-14);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-14);
        assert_eq!(bessel_j1(0.0), 0.0);
        assert_eq!(bessel_j0(0.0), 1.0);
    }

    #[test]
    fn power_sum_bounded() {
        for i in 0..50 {
            let beta = i as f64 * 0.1;
            let p = bessel_j0(beta).powi(2) + 2.0 * bessel_j1(beta).powi(2);
            assert!(p <= 1.0 + 1e-12, "beta={beta} p={p}");
        }
    }
}
