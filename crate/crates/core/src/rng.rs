//! Reproducible random streams.
//!
//! The generator is xoshiro256** whose 256-bit state is filled from the
//! 64-bit seed by SplitMix64 (increment `0x9E3779B97F4A7C15`, finalizer
//! multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`). Bounded
//! integers use Lemire's multiply-shift with rejection, and shuffles are a
//! descending Fisher-Yates. Together these pin every random decision to a
//! documented algorithm so splits can be reproduced outside this crate.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// One SplitMix64 step applied to `x` (stateless mixing function).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct DetRng(Xoshiro256StarStar);

impl DetRng {
    pub fn new(seed: u64) -> DetRng {
        DetRng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    /// Independent stream `stream` derived from `seed`.
    pub fn derive(seed: u64, stream: u64) -> DetRng {
        DetRng::new(splitmix64(seed ^ splitmix64(stream)))
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.0.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for DetRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
