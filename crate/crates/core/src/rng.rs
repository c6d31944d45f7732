//! Deterministic pseudo-random numbers.
//!
//! The generator is xoshiro256** (Blackman & Vigna, 2018). Its 256-bit state
//! is filled from a 64-bit seed by four successive SplitMix64 outputs
//! (increment `0x9E3779B97F4A7C15`, finalizer multipliers
//! `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`). Only integer arithmetic is
//! involved, so streams are identical on every platform.

use crate::error::{param_err, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a master seed, a stage name and an
/// index.
///
/// The stage name is folded with 64-bit FNV-1a (offset basis
/// `0xCBF29CE484222325`, prime `0x100000001B3`), then master, name hash and
/// index are chained through SplitMix64.
pub fn derive_seed(master: u64, stage: &str, index: u64) -> u64 {
    let mut name_hash: u64 = 0xCBF2_9CE4_8422_2325;
    for byte in stage.bytes() {
        name_hash ^= u64::from(byte);
        name_hash = name_hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut state = a ^ name_hash;
    let b = splitmix64(&mut state);
    let mut state = b ^ index.wrapping_mul(GOLDEN_GAMMA);
    splitmix64(&mut state)
}

/// xoshiro256** generator. Single owner; split seeds with [`derive_seed`]
/// instead of sharing one instance across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer on [0, bound). Rejection sampling, no modulo bias.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "Rng::below requires a positive bound");
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    /// One draw on [lo, hi). Callers guarantee `lo < hi`.
    #[inline]
    pub fn uniform_one(&mut self, lo: f64, hi: f64) -> f64 {
        loop {
            let v = lo + (hi - lo) * self.next_f64();
            // rounding can land exactly on `hi` for wide ranges
            if v < hi {
                return v;
            }
        }
    }

    /// `n` draws on [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(param_err(format!("uniform range requires lo < hi, got [{lo}, {hi})")));
        }
        Ok((0..n).map(|_| self.uniform_one(lo, hi)).collect())
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A shuffled `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs of SplitMix64 seeded with 1234567 (Vigna's splitmix64.c).
        let mut s = 1234567u64;
        assert_eq!(splitmix64(&mut s), 6457827717110365317);
        assert_eq!(splitmix64(&mut s), 3203168211198807973);
    }

    #[test]
    fn same_seed_same_stream() {
        let a = Rng::new(42).uniform(-1.0, 2.0, 64).unwrap();
        let b = Rng::new(42).uniform(-1.0, 2.0, 64).unwrap();
        assert_eq!(a, b);
        let c = Rng::new(43).uniform(-1.0, 2.0, 64).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_draw() {
        assert!(Rng::new(1).uniform(0.0, 1.0, 0).unwrap().is_empty());
    }

    #[test]
    fn bad_range_rejected() {
        assert!(matches!(Rng::new(1).uniform(1.0, 1.0, 3), Err(crate::Error::Parameter(_))));
        assert!(Rng::new(1).uniform(2.0, 1.0, 3).is_err());
    }

    #[test]
    fn uniform_mean_close_to_half() {
        let v = Rng::new(7).uniform(0.0, 1.0, 100_000).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!(v.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn below_covers_range() {
        let mut r = Rng::new(9);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[r.below(7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn derived_seeds_differ_by_stage_and_index() {
        let a = derive_seed(5, "pretrain", 0);
        assert_eq!(a, derive_seed(5, "pretrain", 0));
        assert_ne!(a, derive_seed(5, "pretrain", 1));
        assert_ne!(a, derive_seed(5, "train", 0));
        assert_ne!(a, derive_seed(6, "pretrain", 0));
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = Rng::new(3).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
