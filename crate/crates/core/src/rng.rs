//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`RngHandle`], which wraps the
//! ChaCha8 stream cipher generator from `rand_chacha` (`ChaCha8Rng`, seeded
//! with `seed_from_u64`). The algorithm is part of the reproducibility
//! contract: changing it changes every generated experiment.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Child generator whose seed is the next draw of this stream.
    pub fn fork(&mut self) -> RngHandle {
        RngHandle::new(self.inner.next_u64())
    }

    /// Child generator for work item `index`, independent of how many other
    /// children were created before it.
    pub fn derive(&self, index: u64) -> RngHandle {
        let mut base = ChaCha8Rng::seed_from_u64(self.seed);
        base.set_stream(index.wrapping_add(1));
        RngHandle::new(base.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform draw in the open interval `(lo, hi)`.
    pub fn uniform_open(&mut self, lo: f64, hi: f64) -> f64 {
        loop {
            let v = self.uniform(lo, hi);
            if v > lo {
                return v;
            }
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Zero-centred Laplace draw with scale `b`, by inverse CDF.
    pub fn laplace(&mut self, b: f64) -> f64 {
        let u = self.uniform_open(-0.5, 0.5);
        -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}
