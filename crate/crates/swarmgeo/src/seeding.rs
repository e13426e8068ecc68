//! Deterministic, platform-stable RNG derivation.
//!
//! Every random draw in the system comes from a ChaCha stream whose seed
//! is a SHA-256 digest of (root seed, stage label, extra key material).
//! Streams are therefore order-independent: the draw an agent makes for
//! (image, stage, round) does not depend on how many other calls ran
//! before it, which keeps concurrent schedules and replays bit-identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive an RNG from a root seed, a stage label, and arbitrary extra
/// key parts. Parts are length-prefixed so distinct splits of the same
/// bytes cannot collide.
pub fn rng_stream(root: u64, label: &str, parts: &[&[u8]]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// A stable 64-bit key for a string, for seed arithmetic (not a general
/// hash table hasher).
pub fn stable_key(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
