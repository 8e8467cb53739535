//! Seeded random source for design generation.
//!
//! Plans must regenerate bit-identically on any platform, so sampling is done
//! here on top of raw `u64` draws instead of going through `rand`'s
//! distribution code, whose algorithms are allowed to change between releases.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Identifier recorded in plan and ledger files.
pub const RNG_ALGORITHM: &str = "chacha20(rand_chacha-0.3,seed_from_u64)+rejection-u64+fisher-yates";

#[derive(Debug, Clone)]
pub struct DesignRng {
    inner: ChaCha20Rng,
}

impl DesignRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        // Largest multiple of n that fits in u64; draws at or above it are rejected.
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let v = self.inner.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Uniform random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        self.shuffle(&mut order);
        order
    }
}
