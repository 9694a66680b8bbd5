//! Seeded permutation sampling with a fixed, versioned algorithm.
//!
//! Output depends only on the ChaCha8 stream (seeded through
//! `SeedableRng::seed_from_u64`), Lemire's bounded-integer method, and a
//! forward Fisher-Yates shuffle. Changing any of these must bump
//! [`GENERATOR`], because manifests record it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GENERATOR: &str = "chacha8-lemire-fisher-yates/v1";

pub struct PermutationSampler {
    rng: ChaCha8Rng,
}

impl PermutationSampler {
    pub fn new(seed: u64) -> Self {
        PermutationSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream for trial `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        PermutationSampler { rng }
    }

    /// Uniform integer in `0..bound`. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let wide = u128::from(self.rng.next_u64()) * u128::from(bound);
            if (wide as u64) >= threshold {
                return (wide >> 64) as u64;
            }
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// First `len` entries of a uniform random permutation of `0..n`.
    pub fn permutation_prefix(&mut self, n: usize, len: usize) -> Vec<usize> {
        let mut items: Vec<usize> = (0..n).collect();
        let len = len.min(n);
        for i in 0..len {
            let j = i + self.below((n - i) as u64) as usize;
            items.swap(i, j);
        }
        items.truncate(len);
        items
    }

    /// Fisher-Yates draws over `0..n`, yielded one at a time.
    pub fn draws(&mut self, n: usize) -> Draws<'_> {
        Draws {
            sampler: self,
            items: (0..n).collect(),
            next: 0,
        }
    }
}

pub struct Draws<'a> {
    sampler: &'a mut PermutationSampler,
    items: Vec<usize>,
    next: usize,
}

impl Iterator for Draws<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let n = self.items.len();
        if self.next >= n {
            return None;
        }
        let i = self.next;
        let j = i + self.sampler.below((n - i) as u64) as usize;
        self.items.swap(i, j);
        self.next += 1;
        Some(self.items[i])
    }
}
