//! Discrete PID with a clamped integrator.
//!
//! u[n] = kp·e[n] + I[n] + kd·(e[n] − e[n−1])/dt,  I[n] = clamp(I[n−1] + ki·dt·e[n])
//!
//! giving C(z) = kp + ki·dt/(1 − z⁻¹) + kd·(1 − z⁻¹)/dt.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    dt: f64,
    integrator_clamp: f64,
    output_limits: [f64; 2],
    integral: f64,
    prev_error: f64,
}

impl Pid {
    pub fn new(kp: f64, ki: f64, kd: f64, dt: f64, integrator_clamp: f64, output_limits: [f64; 2]) -> Self {
        Self {
            kp,
            ki,
            kd,
            dt,
            integrator_clamp,
            output_limits,
            integral: 0.0,
            prev_error: 0.0,
        }
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Loads the integrator with `bias` and the derivative memory with
    /// `error`, so the first update continues smoothly from `bias`.
    pub fn engage(&mut self, bias: f64, error: f64) {
        self.integral = bias.clamp(-self.integrator_clamp, self.integrator_clamp);
        self.prev_error = error;
    }

    /// Returns the clamped output and whether clamping occurred.
    #[inline]
    pub fn update(&mut self, error: f64) -> (f64, bool) {
        self.integral = (self.integral + self.ki * self.dt * error)
            .clamp(-self.integrator_clamp, self.integrator_clamp);
        let derivative = self.kd * (error - self.prev_error) / self.dt;
        self.prev_error = error;
        let raw = self.kp * error + self.integral + derivative;
        let [lo, hi] = self.output_limits;
        let u = raw.clamp(lo, hi);
        (u, u != raw)
    }

    /// C(z) on the unit circle at frequency `f`.
    pub fn response(&self, f: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -std::f64::consts::TAU * f * self.dt);
        let one = Complex64::new(1.0, 0.0);
        self.kp + self.ki * self.dt / (one - z1) + self.kd * (one - z1) / self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_only() {
        let mut p = Pid::new(2.0, 0.0, 0.0, 1e-3, 10.0, [-5.0, 5.0]);
        assert_eq!(p.update(1.0), (2.0, false));
        assert_eq!(p.update(4.0), (5.0, true));
    }

    #[test]
    fn integrator_accumulates_and_clamps() {
        let mut p = Pid::new(0.0, 100.0, 0.0, 1e-3, 0.5, [-5.0, 5.0]);
        for _ in 0..3 {
            p.update(1.0);
        }
        assert!((p.integral() - 0.3).abs() < 1e-12);
        for _ in 0..10 {
            p.update(1.0);
        }
        assert_eq!(p.integral(), 0.5);
    }

    #[test]
    fn bumpless_engage() {
        let mut p = Pid::new(1.0, 10.0, 0.1, 1e-3, 10.0, [-10.0, 10.0]);
        p.engage(3.0, 0.0);
        let (u, _) = p.update(0.0);
        assert_eq!(u, 3.0);
    }

    #[test]
    fn response_matches_impulse_response() {
        // Feed a unit impulse and compare the DFT of the output with C(z).
        let dt = 1e-3;
        let mut p = Pid::new(0.7, 30.0, 0.002, dt, 1e9, [-1e9, 1e9]);
        let n = 4096;
        let out: Vec<f64> = (0..n).map(|i| p.update(if i == 0 { 1.0 } else { 0.0 }).0).collect();
        // The integral term never decays, so compare against the finite sum directly.
        let f = 37.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, y) in out.iter().enumerate() {
            acc += y * Complex64::from_polar(1.0, -std::f64::consts::TAU * f * dt * i as f64);
        }
        let z1 = Complex64::from_polar(1.0, -std::f64::consts::TAU * f * dt);
        let tail = 30.0 * dt * z1.powu(n as u32) / (Complex64::new(1.0, 0.0) - z1);
        let c = p.response(f);
        assert!((acc - (c - tail)).norm() < 1e-9 * c.norm());
    }
}
