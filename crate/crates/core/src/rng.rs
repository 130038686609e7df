//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha20 (`rand_chacha` 0.3)
//! seeded with `rand_core` 0.6 `SeedableRng::seed_from_u64`, one stream
//! number per purpose. Uniform variates are `(next_u64() >> 11) * 2^-53`,
//! Gaussian variates use the Box-Muller transform on two such uniforms.
//! This is part of the trace file contract: changing any of it changes
//! every synthesized trace.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Identifier written into trace metadata.
pub const GENERATOR_ID: &str = "chacha20-seed_from_u64-v1";

/// Stream numbers, one per consumer.
pub mod stream {
    pub const VIBRATION_PHASES: u64 = 0;
    pub const DETECTOR_NOISE: u64 = 1;
    pub const SCAN_NOISE: u64 = 2;
}

pub struct SeededRng {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            spare_normal: None,
        }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
