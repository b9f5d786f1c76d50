//! Deterministic pseudorandom substreams.
//!
//! All randomness in the crate flows from a single `u64` seed. Parallel work
//! (bootstrap replicates, Monte Carlo blocks, simulation replicates) pulls an
//! independent substream per work item, so results are bit-identical
//! regardless of thread count or scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for substream `stream` of the generator keyed by `seed`.
///
/// ChaCha exposes 2^64 independent streams per key; the (seed, stream) pair
/// fully determines the output.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from (seed, tag), for nesting substream spaces
/// (e.g. an experiment replicate that itself runs a bootstrap).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // SplitMix64 finalizer over the combined word.
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
