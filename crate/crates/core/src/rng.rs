//! Deterministic randomness helpers.
//!
//! Everything in the pipeline that draws random numbers goes through a
//! seeded ChaCha stream so that identical seeds reproduce identical bytes
//! on every platform. Distribution sampling is done by hand (uniform from
//! the high 53 bits, Gaussian via Box-Muller) so the output is pinned by
//! this crate alone, not by a distribution crate's internals.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha12Rng;

/// Creates the stream for `seed`.
pub fn seeded(seed: u64) -> Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derives a child seed from a parent seed and a label, so independent
/// pipeline stages (folds, volumes, frames) get decorrelated streams
/// without sharing mutable state. SplitMix64 finalizer.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    let mut z = parent ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in [0, 1) from the high 53 bits.
pub fn uniform(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [lo, hi).
pub fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal draw (Box-Muller, one value per call; the sibling value
/// is discarded to keep call sites order-independent).
pub fn gaussian(rng: &mut Rng) -> f64 {
    // u1 in (0, 1] so the log is finite.
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform index in [0, n).
pub fn index(rng: &mut Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    (rng.next_u64() % n as u64) as usize
}

/// Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
