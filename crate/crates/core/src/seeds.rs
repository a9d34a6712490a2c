//! Seed derivation for reproducible parallel Monte Carlo runs.
//!
//! Every random stream in a campaign is keyed by `(base_seed, drop_index,
//! lane)` through the SplitMix64 finalizer below, so the stream a UE sees
//! depends only on those integers and never on scheduling. Workers can
//! process drops and UEs in any order, on any number of threads, and still
//! reproduce bit-identical results.
//!
//! The exact mixing function (documented here for reproducibility across
//! reimplementations):
//!
//! ```text
//! mix64(z): z += 0x9e3779b97f4a7c15
//!           z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
//!           z = (z ^ (z >> 27)) * 0x94d049bb133111eb
//!           z ^ (z >> 31)
//! derive_seed(base, a, b) = mix64(mix64(mix64(base) ^ a) ^ b)
//! ```
//!
//! all arithmetic modulo 2^64.

/// SplitMix64 finalizer. Bijective on u64 with good avalanche behavior.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and two indices.
///
/// Index 0 in `b` is reserved for the per-drop stream (UE count and
/// positions); UE `i` within a drop uses `b = i + 1`.
#[inline]
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(base) ^ a) ^ b)
}
