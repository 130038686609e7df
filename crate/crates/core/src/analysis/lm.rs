//! Levenberg–Marquardt least squares with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step changes the cost by less than this fraction.
    pub relative_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// One-sigma parameter uncertainties from the scaled inverse normal matrix;
    /// NaN where the matrix is singular.
    pub std_errors: Vec<f64>,
    /// Euclidean norm of the final residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes Σ r_i(p)² starting from `p0`.
///
/// `residuals(p, out)` fills `out` (length `m`). `scale[j]` is a typical
/// magnitude for parameter `j`, used to size finite-difference steps when the
/// parameter itself is near zero.
pub fn levenberg_marquardt<F>(
    mut residuals: F,
    p0: &[f64],
    scale: &[f64],
    m: usize,
    options: &LmOptions,
) -> Result<LmFit>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = p0.len();
    if n == 0 || scale.len() != n {
        return Err(Error::arg("p0", "parameter and scale vectors must be non-empty and equal length"));
    }
    if m < n {
        return Err(Error::FitFailed {
            reason: format!("{m} data points cannot determine {n} parameters"),
            residual_norm: f64::NAN,
        });
    }

    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    residuals(&p, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::FitFailed {
            reason: "residuals are not finite at the starting point".into(),
            residual_norm: cost.sqrt(),
        });
    }

    let mut lambda = 1e-3;
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let mut r_plus = vec![0.0; m];
    let mut r_minus = vec![0.0; m];
    let mut trial = vec![0.0; m];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        jacobian(&mut residuals, &p, scale, &mut jac, &mut r_plus, &mut r_minus);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let candidate: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            residuals(&candidate, &mut trial);
            let new_cost = sum_sq(&trial);
            if new_cost.is_finite() && new_cost <= cost {
                let change = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                p = candidate;
                std::mem::swap(&mut r, &mut trial);
                cost = new_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if change < options.relative_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No downhill direction left: already at a minimum to working precision.
            converged = true;
        }
        if converged || cost == 0.0 {
            converged = true;
            break;
        }
    }

    jacobian(&mut residuals, &p, scale, &mut jac, &mut r_plus, &mut r_minus);
    let std_errors = std_errors(&jac, cost, m);
    Ok(LmFit {
        params: p,
        std_errors,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
    })
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn jacobian<F>(
    residuals: &mut F,
    p: &[f64],
    scale: &[f64],
    jac: &mut DMatrix<f64>,
    r_plus: &mut [f64],
    r_minus: &mut [f64],
) where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 6e-6 * p[j].abs().max(scale[j].abs()).max(1e-300);
        q[j] = p[j] + h;
        residuals(&q, r_plus);
        q[j] = p[j] - h;
        residuals(&q, r_minus);
        q[j] = p[j];
        for i in 0..r_plus.len() {
            jac[(i, j)] = (r_plus[i] - r_minus[i]) / (2.0 * h);
        }
    }
}

fn std_errors(jac: &DMatrix<f64>, cost: f64, m: usize) -> Vec<f64> {
    let n = jac.ncols();
    let dof = (m - n).max(1) as f64;
    let jtj = jac.transpose() * jac;
    match jtj.try_inverse() {
        Some(inv) => (0..n).map(|k| (inv[(k, k)] * cost / dof).max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; n],
    }
}
