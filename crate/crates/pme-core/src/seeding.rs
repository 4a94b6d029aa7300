//! Deterministic seed derivation.
//!
//! Every randomized component derives its own sub-seed from a global seed
//! plus a stable string scope, so adding a participant (or resample, or
//! tree) never perturbs the draws of its siblings.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from `(base, parts...)` via SHA-256. Stable across
/// platforms and releases, unlike the std hasher.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in parts {
        hasher.update([0u8]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// RNG seeded from a derived scope.
pub fn scoped_rng(base: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}
