//! Deterministic seed derivation.
//!
//! Every random draw in the crate flows from a single root seed through this
//! module, so a whole experiment — topology, channels, solver initialization,
//! echo noise — replays bit-for-bit from one `u64`. Child streams are derived
//! by mixing the root seed with a trial index and a purpose tag, which keeps
//! the streams independent without any global RNG state.
//!
//! The mixing functions are the well-known SplitMix64 finalizer and FNV-1a;
//! both are fixed by construction and do not depend on platform, process, or
//! library version.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer: a fixed 64-bit mixing permutation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string, used to fold purpose tags into seeds.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a child seed from a root seed, a trial index, and a purpose tag.
///
/// Distinct `(trial, purpose)` pairs give unrelated streams; the same triple
/// always gives the same child. Purpose tags are short strings such as
/// `"scenario"`, `"init"`, or `"echo"`.
pub fn child_seed(root: u64, trial: u64, purpose: &str) -> u64 {
    splitmix64(root ^ splitmix64(trial ^ fnv1a(purpose.as_bytes())))
}

/// Builds a seeded ChaCha RNG from a `u64` seed.
///
/// The full 256-bit key is filled from a SplitMix64 stream over the seed, so
/// the construction does not depend on any library's `seed_from_u64` default.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
