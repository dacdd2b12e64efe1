//! Seeded Laplace noise.
//!
//! Draws come from ChaCha20 (a counter-based generator) through the inverse
//! CDF, so a seed reproduces the same stream on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LaplaceSource {
    seed: u64,
    rng: ChaCha20Rng,
}

impl LaplaceSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent source for parallel use: same key, distinct ChaCha stream.
    pub fn derive(&self, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.wrapping_add(1));
        Self {
            seed: self.seed,
            rng,
        }
    }

    /// Uniform on the open interval (0, 1).
    fn open_uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// One draw from Lap(scale). `scale == 0` yields exactly zero.
    pub fn draw(&mut self, scale: f64) -> f64 {
        let u = self.open_uniform();
        if scale == 0.0 {
            return 0.0;
        }
        if u < 0.5 {
            scale * (2.0 * u).ln()
        } else {
            -scale * (2.0 * (1.0 - u)).ln()
        }
    }

    pub fn sample(&mut self, scale: f64, n: usize) -> Result<Vec<f64>> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Laplace scale must be positive and finite, got {scale}"
            )));
        }
        Ok((0..n).map(|_| self.draw(scale)).collect())
    }
}

/// `n` draws from the zero-mean Laplace distribution with the given scale.
pub fn laplace_sample(src: &mut LaplaceSource, scale: f64, n: usize) -> Result<Vec<f64>> {
    src.sample(scale, n)
}
