//! Keyed SplitMix64 streams.
//!
//! Every random quantity in the crate is drawn from a SplitMix64 generator
//! whose initial state is derived from a 64-bit seed and a list of keys:
//!
//! ```text
//! state = seed
//! for each key k:           // strings hashed with 64-bit FNV-1a,
//!     state = mix64(state ^ k)   // integers used as-is
//! next_u64():
//!     state += 0x9e3779b97f4a7c15
//!     return mix64(state)
//! mix64(z):
//!     z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
//!     z = (z ^ (z >> 27)) * 0x94d049bb133111eb
//!     return z ^ (z >> 31)
//! ```
//!
//! Uniform reals use the top 53 bits: `u = (next_u64() >> 11) * 2^-53`,
//! giving `u ∈ [0, 1)`. All arithmetic is wrapping, so streams are identical
//! on every platform.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A stream key component.
#[derive(Debug, Clone, Copy)]
pub enum Key<'a> {
    Str(&'a str),
    Int(u64),
}

impl Key<'_> {
    fn word(self) -> u64 {
        match self {
            Key::Str(s) => fnv1a64(s.as_bytes()),
            Key::Int(v) => v,
        }
    }
}

/// Deterministic generator keyed by `(seed, keys...)`.
#[derive(Debug, Clone)]
pub struct KeyedRng {
    inner: SplitMix64,
}

impl KeyedRng {
    pub fn new(seed: u64, keys: &[Key<'_>]) -> Self {
        let state = keys.iter().fold(seed, |s, k| mix64(s ^ k.word()));
        KeyedRng { inner: SplitMix64::from_seed(state.to_le_bytes()) }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, &[])
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Standard normal sample (Ziggurat via `rand_distr`).
    pub fn normal(&mut self) -> f64 {
        use rand::Rng;
        self.sample(rand_distr::StandardNormal)
    }
}

impl RngCore for KeyedRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
